import numpy as np
import pytest

from turblab.errors import CFLViolation
from turblab.integrators import DiagonalOperator, check_cfl, imex_step, rk4_step, time_integrator


def test_rk4_one_step_of_decay():
    y = rk4_step(np.array([1.0]), lambda y: -y, 0.1)
    # Taylor series of exp(-0.1) through fourth order
    assert y[0] == pytest.approx(1 - 0.1 + 0.01 / 2 - 0.001 / 6 + 0.0001 / 24, abs=1e-15)
    assert y[0] == pytest.approx(0.9048375, abs=1e-7)


def test_zero_rhs_leaves_state():
    y = np.arange(5.0)
    assert np.array_equal(rk4_step(y, lambda v: np.zeros_like(v), 0.3), y)
    L = DiagonalOperator(np.zeros(5))
    for scheme in ("imex", "imex3", "imex-ssp2"):
        assert np.allclose(imex_step(y, lambda v: np.zeros_like(v), L, 0.3, scheme), y, atol=0)


def test_backward_euler_heat_multiplier():
    nu, k, dt = 0.1, 3.0, 0.05
    L = DiagonalOperator(np.array([-nu * k**2]))
    y = imex_step(np.array([1.0]), lambda v: np.zeros_like(v), L, dt, "imex")
    assert y[0] == pytest.approx(1 / (1 + nu * k**2 * dt), rel=1e-14)


@pytest.mark.parametrize("scheme,order", [("imex", 1), ("imex-ssp2", 2), ("imex3", 3)])
def test_imex_convergence_order(scheme, order):
    # y' = -2 y + sin(t y)-free forcing: y' = lam y + cos(y) split stiff/nonstiff
    lam = DiagonalOperator(np.array([-2.0]))

    def explicit(y):
        return np.cos(y)

    ref = np.array([0.5])
    for _ in range(4000):
        ref = rk4_step(ref, lambda y: explicit(y) - 2.0 * y, 1e-4)

    def solve(dt):
        y = np.array([0.5])
        for _ in range(int(round(0.4 / dt))):
            y = imex_step(y, explicit, lam, dt, scheme)
        return abs(y[0] - ref[0])

    e1, e2 = solve(0.02), solve(0.01)
    assert np.log2(e1 / e2) == pytest.approx(order, abs=0.35)


def test_cfl_guard():
    assert check_cfl(0.01, 1.0, (0.1, 0.1)) == pytest.approx(0.1)
    with pytest.raises(CFLViolation):
        check_cfl(0.1, 1.0, (0.1,))
    with pytest.raises(CFLViolation):
        time_integrator(np.zeros(3), lambda y: y, 1.0, umax=10.0, spacing=(0.1,))
