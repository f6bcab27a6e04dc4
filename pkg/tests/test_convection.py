import numpy as np
import pytest
from scipy.linalg import solve_banded

from turblab.acceptance import dense_B
from turblab.convection import (
    BoussinesqState,
    KernelParams,
    RotatingIPState,
    apply_B,
    fluctuation_n,
    kernel_sum,
    linear_growth_rates,
    nusselt_and_identities,
    nusselt_bounds,
    run_boussinesq,
    run_rotating,
    step_boussinesq,
    step_infinite_prandtl_rotating,
    thm8_check,
)
from turblab.convection.nusselt import new_history, record
from turblab.convection.operators import (
    decay_slope,
    kernel_direct,
    kernel_images,
    nearest_mode_asymptote,
    oscillating_family,
    thm8_ratio,
)
from turblab.convection.rotating import (
    RotatingStokes,
    nonrotating_stokes,
    stokes_matrix,
    stokes_rhs,
    to_banded,
    unpack,
)
from turblab.errors import ContractViolation
from turblab.fields import ChannelDomain, ScalarField


def conduction_T(d):
    _, z = d.mesh()
    T = 1.0 - z
    T[:, 0], T[:, -1] = 1.0, 0.0
    return T


def test_conduction_is_a_fixed_point():
    d = ChannelDomain(L=2.0, nx=32, nz=32)
    s = BoussinesqState.conduction(d, Ra=1e4)
    T0 = s.T.values.copy()
    for _ in range(5):
        s = step_boussinesq(s, 1e-3)
    assert np.abs(s.T.values - T0).max() < 1e-12
    assert np.abs(s.psi.values).max() < 1e-12

    r = step_infinite_prandtl_rotating(RotatingIPState(ScalarField(d, T0), 0.1, 3000.0), 1e-3)
    assert np.abs(r.T.values - T0).max() < 1e-12


def test_onset_between_1000_and_2000():
    d = ChannelDomain(L=2.0, nx=16, nz=32)
    below = linear_growth_rates(d, 1000.0, modes=[1, 2])
    above = linear_growth_rates(d, 2000.0, modes=[1])
    assert max(below.values()) < 0
    assert above[1] > 0


def test_subcritical_perturbation_decays_and_stays_bounded():
    d = ChannelDomain(L=2.0, nx=32, nz=32)
    s = BoussinesqState.perturbed(d, Ra=1000.0, amplitude=0.05)
    base = conduction_T(d)
    a0 = np.abs(s.T.values - base).max()
    run = run_boussinesq(s, 0.2, dt_max=2e-3)
    T = run.state.T.values
    assert np.abs(T - base).max() < 0.5 * a0
    assert T.min() >= 0.0 and T.max() <= 1.0


def test_identities_on_conduction():
    d = ChannelDomain(L=2.0, nx=16, nz=16)
    h = new_history()
    zero = np.zeros((2,) + d.shape)
    for t in (0.0, 0.5, 1.0):
        record(h, t, zero, conduction_T(d), d)
    out = nusselt_and_identities(h, 1e4)
    assert out["N"] == pytest.approx(1.0, abs=1e-14)
    assert out["I_T"] == pytest.approx(1.0, rel=1e-12)
    assert out["I_u"] == 0.0
    assert fluctuation_n(h) == pytest.approx(0.0, abs=1e-28)


def test_nusselt_is_shift_invariant_and_n_is_below_I_T():
    d = ChannelDomain(L=2.0, nx=32, nz=16)
    x, z = d.mesh()
    T = conduction_T(d) + 0.2 * np.sin(np.pi * z) * np.cos(np.pi * x)
    w = np.sin(np.pi * z) * np.cos(np.pi * x)
    u = np.stack([np.zeros_like(w), w])
    h1, h2 = new_history(), new_history()
    for t in (0.0, 0.5, 1.0):
        record(h1, t, u, T, d)
        record(h2, t, np.roll(u, 5, axis=1), np.roll(T, 5, axis=0), d)
    a, b = nusselt_and_identities(h1, 1e4), nusselt_and_identities(h2, 1e4)
    assert a["N"] == pytest.approx(b["N"], rel=1e-12)
    for n, gt in zip(h1.array("n"), h1.array("grad_T_sq")):
        assert n <= gt + 1e-12


def test_fluctuation_n_single_mode():
    # theta = a sin(pi z) cos(2 pi x / L): <|grad theta|^2> = a^2 ((2 pi / L)^2 + pi^2) / 4
    d = ChannelDomain(L=2.0, nx=32, nz=256)
    x, z = d.mesh()
    a = 0.1
    T = conduction_T(d) + a * np.sin(np.pi * z) * np.cos(np.pi * x)
    h = new_history()
    zero = np.zeros((2,) + d.shape)
    for t in (0.0, 0.5, 1.0):
        record(h, t, zero, T, d)
    exact = a**2 * (np.pi**2 + np.pi**2) / 4
    assert fluctuation_n(h) == pytest.approx(exact, rel=1e-4)


def test_closed_form_bounds():
    assert nusselt_bounds(Ra=1e4)["thm5"] == pytest.approx(101.0)
    # without rotation the log branch is the smallest once R is large
    R = 1e20
    out = nusselt_bounds(E=np.inf, R=R)
    assert out["thm6"] == pytest.approx(1 + R ** (1 / 3) * np.log(R) ** (2 / 3), rel=1e-12)
    assert out["thm6_branch"] == 2
    assert nusselt_bounds(E=np.inf, R=1e4)["thm6_branch"] == 0
    assert nusselt_bounds(Ra=1e6, n=0.0)["thm7_full"] == 1.0
    assert nusselt_bounds(Ra=1e4, constants={"C": 0.5})["thm5"] == pytest.approx(51.0)


def test_rotating_conduction_has_no_motion():
    d = ChannelDomain(L=2.0, nx=16, nz=16)
    st = RotatingStokes(d, 0.1, 3000.0)
    T_hat = np.fft.rfft(conduction_T(d), axis=0)[:, 1:-1]
    sol = st.solve(T_hat)
    for comp in (sol.u, sol.v, sol.w):
        assert np.abs(comp).max() < 1e-12


def test_nonrotating_limit_matches_independent_assembly():
    nz, k, R = 24, np.pi, 2500.0
    rng = np.random.default_rng(3)
    T = rng.standard_normal(nz - 1) + 1j * rng.standard_normal(nz - 1)
    x = solve_banded((4, 4), to_banded(stokes_matrix(nz, k, 0.0)), stokes_rhs(nz, R * T))
    u, v, _, w = unpack(x, nz)
    u_ref, _, w_ref = nonrotating_stokes(nz, k, R, T)
    scale = np.abs(w_ref).max()
    assert np.abs(w - w_ref).max() <= 1e-10 * scale
    assert np.abs(u - u_ref).max() <= 1e-10 * scale
    assert np.abs(v).max() <= 1e-10 * scale


def test_banded_stokes_matches_dense():
    nz, k = 32, 2.5
    rng = np.random.default_rng(4)
    T = rng.standard_normal(nz - 1)
    b = stokes_rhs(nz, 3000.0 * T)
    for f in (0.0, 10.0, 100.0):
        A = stokes_matrix(nz, k, f)
        dense = np.linalg.solve(A, b)
        banded = solve_banded((4, 4), to_banded(A), b)
        assert np.abs(banded - dense).max() <= 1e-10 * np.abs(dense).max()


def test_rotation_suppresses_heat_transport():
    d = ChannelDomain(L=2.0, nx=32, nz=16)
    x, z = d.mesh()
    T0 = conduction_T(d) + 0.01 * np.sin(np.pi * z) * np.cos(np.pi * x)
    T0[:, 0], T0[:, -1] = 1.0, 0.0
    N = []
    for E in (0.01, 0.1, 1.0, np.inf):
        _, h = run_rotating(RotatingIPState(ScalarField(d, T0), E, 3000.0), 1.0)
        N.append(nusselt_and_identities(h, 3000.0)["N"])
    assert np.all(np.isfinite(N))
    assert N[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(N) >= -1e-9)
    assert N[-1] > 1.5


def test_B_annihilates_zero_and_rejects_wall_values():
    d = ChannelDomain(L=2.0, nx=16, nz=16)
    assert np.abs(apply_B(ScalarField(d, np.zeros(d.shape))).values).max() == 0
    with pytest.raises(ContractViolation):
        apply_B(ScalarField(d, np.ones(d.shape)))


def test_B_matches_dense_oracle():
    d = ChannelDomain(L=2.0, nx=12, nz=10)
    rng = np.random.default_rng(6)
    theta = rng.standard_normal(d.shape)
    theta[:, [0, -1]] = 0.0
    inner, first, last = dense_B(d)
    flat = theta[:, 1:-1].reshape(-1)
    got = apply_B(ScalarField(d, theta)).values
    assert np.abs(got[:, 1:-1].reshape(-1) - inner @ flat).max() < 1e-9
    assert np.abs(got[:, 0] - first @ flat).max() < 1e-9
    assert np.abs(got[:, -1] - last @ flat).max() < 1e-9


def test_B_single_mode_converges_with_nz():
    # self-convergence in nz of a single horizontal mode
    errs = []
    for nz in (32, 64, 128):
        d = ChannelDomain(L=2 * np.pi, nx=8, nz=nz)
        x, z = d.mesh()
        th = np.sin(np.pi * z) * np.cos(x)
        th[:, [0, -1]] = 0.0
        errs.append(apply_B(ScalarField(d, th)).values)
    fine = errs[-1][:, ::4]
    e1 = np.abs(errs[0] - fine).max()
    e2 = np.abs(errs[1][:, ::2] - fine).max()
    assert e1 / e2 > 3.0


def test_B_scales_linearly():
    d = ChannelDomain(L=2.0, nx=32, nz=32)
    rng = np.random.default_rng(8)
    th = rng.standard_normal(d.shape)
    th[:, [0, -1]] = 0.0
    a = apply_B(ScalarField(d, th)).values
    b = apply_B(ScalarField(d, -3.0 * th)).values
    assert np.abs(b + 3.0 * a).max() <= 1e-12 * np.abs(a).max()
    assert thm8_ratio(ScalarField(d, 5.0 * th)) <= thm8_ratio(ScalarField(d, th))


def test_thm8_family_stays_bounded():
    d = ChannelDomain(L=2.0, nx=128, nz=32)
    rep = thm8_check(oscillating_family(d, 6))
    assert rep.bounded
    assert rep.sup < 1.0


def test_kernel_is_real_and_even():
    p = KernelParams(L=1.0, p=1, eps=0.05)
    x = np.array([[0.1, 0.23], [-0.1, -0.23], [0.37, -0.05], [-0.37, 0.05]])
    K, comp = kernel_sum(p, x)
    assert np.isrealobj(K)
    assert K[0] == pytest.approx(K[1], rel=1e-12)
    assert K[2] == pytest.approx(K[3], rel=1e-12)
    assert np.all(comp > 0)


def test_kernel_far_asymptote():
    p = KernelParams(L=1.0, p=2, eps=5.0)
    K, _ = kernel_sum(p, np.zeros(2))
    assert float(K) == pytest.approx(nearest_mode_asymptote(p, 5.0), rel=1e-6)


def test_kernel_routes_agree():
    for pp in (1, 2, 3):
        p = KernelParams(L=1.0, p=pp)
        x = np.array([[0.0, 0.0], [0.2, 0.1], [0.5, 0.5]])
        a, _ = kernel_direct(p, x, 0.08)
        b = kernel_images(p, x, 0.08)
        assert np.abs(a - b).max() <= 1e-6 * np.abs(a).max()


@pytest.mark.parametrize("pp", [1, 2, 3])
def test_kernel_local_decay_slope(pp):
    p = KernelParams(L=1.0, p=pp)
    assert decay_slope(p, (0.0, 1.0)) == pytest.approx(-(pp + 2) / 2, abs=0.02)
