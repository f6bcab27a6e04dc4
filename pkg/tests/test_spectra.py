import numpy as np
import pytest

from turblab.errors import ContractViolation, ParameterError
from turblab.fields import PeriodicBox, ScalarField, VectorField
from turblab.spectra import (
    SpectrumReport,
    _c_psi,
    bands_needed,
    build_mollifier,
    c_psi_constant,
    empirical_constant,
    lp_decompose,
    lp_spectrum,
    thm9_envelope,
    thm10_envelope,
    window_scalars,
)


def test_mollifier_profile():
    phi = build_mollifier()
    assert phi(0.0) == 1.0 and phi(0.5) == 1.0 and phi(0.625) == 1.0
    assert phi(0.75) == 0.0 and phi(0.8) == 0.0
    # the smooth step is antisymmetric about the middle of its ramp
    assert phi(11 / 16) == pytest.approx(0.5, abs=1e-15)
    r = np.linspace(0, 1, 401)
    assert np.all(np.diff(phi(r)) <= 0)
    assert np.all((phi(r) >= 0) & (phi(r) <= 1))


def test_band_multipliers_partition_unity():
    phi = build_mollifier()
    xi = np.linspace(0, 40, 2001)
    total = phi(xi) + sum(phi.band(2.0**-m * xi) for m in range(8))
    assert np.abs(total - 1).max() < 1e-14


def test_constant_field_is_all_low_pass():
    box = PeriodicBox(2, 16)
    dec = lp_decompose(ScalarField(box, np.full(box.shape, 3.0)), 1.0)
    assert np.abs(dec.low - 3.0).max() < 1e-14
    assert max(np.abs(b).max() for b in dec.bands) < 1e-14


def test_unit_scale_mode_sits_in_band_zero():
    box = PeriodicBox(2, 16)
    x, _ = box.mesh()
    f = np.cos(x)  # L |k| = 1 with L = 1
    dec = lp_decompose(ScalarField(box, f), 1.0)
    assert np.abs(dec.bands[0] - f).max() < 1e-14
    assert np.abs(dec.low).max() < 1e-14
    assert max(np.abs(b).max() for b in dec.bands[1:]) < 1e-14


def test_reconstruction_is_exact():
    rng = np.random.default_rng(0)
    box = PeriodicBox(3, 16)
    u = VectorField(box, rng.standard_normal((3,) + box.shape))
    dec = lp_decompose(u, 0.7)
    assert np.abs(dec.reconstruct() - u.values).max() < 1e-12
    with pytest.raises(ParameterError):
        lp_decompose(u, 0.7, M=bands_needed(box, 0.7) - 1)


def test_single_mode_spectrum():
    box = PeriodicBox(2, 32)
    x, _ = box.mesh()
    a = 0.3
    f = ScalarField(box, a * np.sin(4 * x))
    rep = lp_spectrum([f], 1.0)
    # 4 = 2^2 / L, on the plateau of band 2
    expect = np.zeros_like(rep.E_LP)
    expect[2] = a**2 / 2 / rep.k_hi[2]
    assert np.abs(rep.E_LP - expect).max() < 1e-14
    zero = lp_spectrum([ScalarField(box, np.zeros(box.shape))], 1.0)
    assert np.all(zero.E_LP == 0)
    doubled = lp_spectrum([ScalarField(box, 2 * f.values)], 1.0)
    assert np.allclose(doubled.E_LP, 4 * rep.E_LP, rtol=1e-12, atol=0)


def test_spectrum_time_average_and_empty_window():
    box = PeriodicBox(2, 16)
    x, _ = box.mesh()
    f1, f2 = ScalarField(box, np.sin(x)), ScalarField(box, 3 * np.sin(x))
    avg = lp_spectrum([f1, f2], 1.0).E_LP
    parts = [lp_spectrum([f], 1.0).E_LP for f in (f1, f2)]
    assert np.allclose(avg, 0.5 * (parts[0] + parts[1]))
    with pytest.raises(ContractViolation):
        lp_spectrum([], 1.0)


def test_c_psi_is_converged():
    value, change = c_psi_constant()
    assert value > 0
    assert change <= 5e-3
    for rmax, pad in ((1e4, 8), (2e4, 16)):
        assert _c_psi(rmax, pad) == pytest.approx(value, rel=5e-4)


def test_thm9_envelope_at_dissipation_scale():
    tau_inv, nu, C = 2.0, 1e-3, 1.7
    k_d = np.sqrt(tau_inv / nu)
    assert thm9_envelope(k_d, tau_inv, nu, C) == pytest.approx(C * tau_inv**2 * k_d**-3, rel=1e-12)
    assert thm9_envelope(2 * k_d, tau_inv, nu) / thm9_envelope(k_d, tau_inv, nu) == pytest.approx(2.0**-9)


def test_thm10_envelope_shell_ratio():
    e = thm10_envelope(np.array([4.0, 8.0]), 0.3, 20.0)
    assert e[1] / e[0] == pytest.approx(2.0**-5, rel=1e-12)


def test_window_scalars_of_a_sine():
    box = PeriodicBox(2, 64, side=1.0)
    _, y = box.mesh()
    a, nu = 0.4, 0.01
    u = VectorField(box, np.stack([a * np.sin(2 * np.pi * y), np.zeros_like(y)]))
    s = window_scalars([u], nu)
    g = 2 * np.pi * a
    assert s["tau_inv"] == pytest.approx(g, rel=1e-12)
    assert s["eps"] == pytest.approx(nu * g**2 / 2, rel=1e-12)
    # <|cos|^3> = 4 / (3 pi)
    assert s["eps_hat"] == pytest.approx(nu * (g**3 * 4 / (3 * np.pi)) ** (2 / 3), rel=1e-6)
    assert s["k_d_hat"] == pytest.approx(nu**-0.75 * s["eps_hat"] ** 0.25)


def test_empirical_constant_picks_worst_shell():
    rep = SpectrumReport(np.array([0.5, 1, 2]), np.array([1.0, 2, 4]), np.array([1.0, 0.5, 0.0]), np.zeros(3), 1.0)
    env = np.array([2.0, 0.25, 1.0])
    assert empirical_constant(rep, env) == pytest.approx(2.0)
    assert empirical_constant(rep, env, k_min=1.5) == pytest.approx(2.0)
    assert empirical_constant(rep, np.array([0.1, 1.0, 1.0]), k_min=1.5) == pytest.approx(0.5)
