import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from turblab import combustion as cb
from turblab.errors import ContractViolation
from turblab.fields import ScalarField, StripDomain


def laminar_run(kappa=0.02, v0=1.0, nx=512, ny=4, t_lengths=200):
    ell = kappa / v0
    d = StripDomain(X=50 * ell, nx=nx, ny=ny)
    s = cb.FrontState(cb.initial_front(d, kappa, v0), kappa, v0)
    return cb.run_front(s, t_lengths * ell / v0)


def test_reaction_zeros_are_steady():
    d = StripDomain(X=1.0, nx=64, ny=4)
    for c in (0.0, 1.0):
        s = cb.FrontState(ScalarField(d, np.full(d.shape, c)), 0.02, 1.0, flow=cb.shear_profile(d, "sine", 2.0))
        solver = cb.KPPSolver(d, 0.02, 1.0, far_field=(c, c))
        out = cb.step_kpp(s, 0.005, solver, shift=False)
        assert np.abs(out.T.values - c).max() < 1e-14
        assert cb.bulk_burning_rate(out, cb.kpp_rhs(out, solver)) == pytest.approx(0.0, abs=1e-12)


def test_laminar_front_speed():
    run = laminar_run()
    assert run.V[-1] == pytest.approx(1.0, rel=0.03)
    assert run.product.min() > 0


def test_burning_rate_matches_time_difference():
    kappa, v0 = 0.02, 1.0
    d = StripDomain(X=1.0, nx=256, ny=4)
    s = cb.FrontState(cb.initial_front(d, kappa, v0), kappa, v0)
    solver = cb.KPPSolver(d, kappa, v0)
    for _ in range(200):
        s = cb.step_kpp(s, 2e-3, solver, shift=False)
    dt = 1e-4
    m0 = s.T.values.sum() * d.cell_volume
    s1 = cb.step_kpp(s, dt, solver, shift=False)
    m1 = s1.T.values.sum() * d.cell_volume
    # forward difference over one short step against the step-averaged rate
    mid = 0.5 * (cb.bulk_burning_rate(s, cb.kpp_rhs(s, solver)) + cb.bulk_burning_rate(s1, cb.kpp_rhs(s1, solver)))
    assert (m1 - m0) / dt == pytest.approx(mid, rel=5e-3)


def test_shear_self_convergence_in_y():
    avg = []
    for ny in (32, 64):
        d = StripDomain(X=20.0, nx=1024, ny=ny)
        s = cb.FrontState(cb.initial_front(d, 0.01, 1.0), 0.01, 1.0, flow=cb.shear_profile(d, "sine", 4.0))
        r = cb.run_front(s, 1.0)
        avg.append(cb.avg_burning_rate((r.t, r.V), 1.0))
    assert avg[1] == pytest.approx(avg[0], rel=0.02)


def test_average_rate_arithmetic():
    t = np.linspace(0, 2, 21)
    assert cb.avg_burning_rate((t, np.full_like(t, 3.0)), 1.7) == pytest.approx(3.0)
    assert cb.avg_burning_rate((t, t), 1.0) == pytest.approx(0.5)
    with pytest.raises(ContractViolation):
        cb.avg_burning_rate((t, t), 5.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_average_rate_against_simpson(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, 4)
    t = np.linspace(0, 1, 2001)
    V = a[0] + a[1] * np.sin(3 * t) + a[2] * t**2 + a[3] * np.cos(7 * t)
    ref = simpson(V, x=t)
    got = cb.avg_burning_rate((t, V), 1.0)
    assert got == pytest.approx(ref, rel=1e-3, abs=1e-6)


def tanh_product(w, X=60.0, nx=2**15):
    d = StripDomain(X=X, nx=nx, ny=2)
    x, _ = d.mesh()
    return cb.product_functional(ScalarField(d, 0.5 * (1 - np.tanh(x / w)))).value


def test_product_functional_is_width_independent():
    # closed forms: int T(1-T) = w/2 and int |T'|^2 = 1/(3w)
    for w in (0.1, 1.0, 10.0):
        X = max(60.0, 30 * w)
        assert tanh_product(w, X=X) == pytest.approx(1 / 6, rel=0.02)
    assert tanh_product(0.5) == pytest.approx(tanh_product(1.0), rel=0.02)


def test_thm3_bound_values():
    assert cb.thm3_bound(1.0, 0.5, 0.0) == 0.0
    assert cb.thm3_bound(2.0, 0.1, 1e6, C=1.5) == pytest.approx(3.0)
    assert cb.thm3_bound(1.0, 0.5, 1.0) == pytest.approx(1 - np.exp(-1))
    assert cb.thm3_bound(1.0, 0.5, 1.0) == pytest.approx(0.6321, abs=1e-4)


def test_partitions():
    y = (np.arange(64) + 0.5) / 64
    p = cb.compute_partition(np.sin(2 * np.pi * y))
    assert p.signs == [1, -1]
    assert p.bounds[0][1] == pytest.approx(0.5)
    p = cb.compute_partition(y - 0.5)
    assert p.signs == [-1, 1]
    assert p.bounds[0][1] == pytest.approx(0.5)
    p = cb.compute_partition(np.sin(4 * np.pi * y))
    assert p.signs == [1, -1, 1, -1]
    assert np.allclose(p.halfwidths, 0.125)
    with pytest.raises(ContractViolation):
        cb.compute_partition(np.zeros(8))
    with pytest.raises(ContractViolation):
        cb.compute_partition(np.ones(8))


def test_thm4_closed_form():
    U, ell = 3.0, 0.05
    u = lambda y: U * np.sin(2 * np.pi * y)  # noqa: E731
    y = (np.arange(256) + 0.5) / 256
    part = cb.compute_partition(u(y))
    bound, tau0 = cb.thm4_bound(part, u, ell, 1.0)
    cp, cm = cb.c_plus_minus(part, ell, 1.0)
    assert cp == pytest.approx(0.5) and cm == pytest.approx(0.5)
    middle = U * np.sqrt(2) / (2 * np.pi)
    assert middle == pytest.approx(0.22508 * U, rel=1e-5)
    assert bound == pytest.approx(middle / 1.04, rel=1e-6)
    assert bound == pytest.approx(0.21642 * U, rel=1e-4)
    assert tau0 == pytest.approx(1.0)
    doubled, _ = cb.thm4_bound(part, lambda s: 2 * u(s), ell, 1.0)
    assert doubled == pytest.approx(2 * bound)
