"""Explicit RK4 and implicit-explicit Runge-Kutta time stepping.

Implicit operators only need to expose ``solve(r, c)`` returning ``y`` with
``y - c L y = r``.  The IMEX schemes are stiffly accurate ARS-type schemes, so
the implicit stage contribution ``L Y_i`` is recovered from the solve itself
and never has to be applied explicitly.
"""

import numpy as np

from .errors import CFLViolation, ParameterError

CFL_LIMIT = 0.5


def check_cfl(dt, umax, spacing, limit=CFL_LIMIT):
    """Raise :class:`CFLViolation` if dt * max|u| / h exceeds ``limit``."""
    h = float(np.min(spacing))
    courant = dt * float(umax) / h
    if courant > limit:
        raise CFLViolation(courant, limit)
    return courant


class DiagonalOperator:
    """Linear operator acting as a pointwise multiplier (e.g. -nu k^2 in Fourier space)."""

    def __init__(self, symbol):
        self.symbol = symbol

    def apply(self, y):
        return self.symbol * y

    def solve(self, r, c):
        return r / (1.0 - c * self.symbol)


# (explicit A, implicit A) including the initial explicit-only stage; the
# last implicit row doubles as the weights because both schemes are stiffly
# accurate.
_ARS111 = (
    np.array([[0.0, 0.0], [1.0, 0.0]]),
    np.array([[0.0, 0.0], [0.0, 1.0]]),
)

_ARS443 = (
    np.array(
        [
            [0, 0, 0, 0, 0],
            [1 / 2, 0, 0, 0, 0],
            [11 / 18, 1 / 18, 0, 0, 0],
            [5 / 6, -5 / 6, 1 / 2, 0, 0],
            [1 / 4, 7 / 4, 3 / 4, -7 / 4, 0],
        ]
    ),
    np.array(
        [
            [0, 0, 0, 0, 0],
            [0, 1 / 2, 0, 0, 0],
            [0, 1 / 6, 1 / 2, 0, 0],
            [0, -1 / 2, 1 / 2, 1 / 2, 0],
            [0, 3 / 2, -3 / 2, 1 / 2, 1 / 2],
        ]
    ),
)

# IMEX-SSP2(2,2,2): SSP explicit part, for problems needing monotone stages
_G = 1 - 1 / np.sqrt(2)
_SSP2 = (
    np.array([[0.0, 0.0], [1.0, 0.0]]),
    np.array([[_G, 0.0], [1 - 2 * _G, _G]]),
    np.array([0.5, 0.5]),
)

IMEX_TABLEAUX = {"imex": _ARS111, "imex3": _ARS443, "imex-ssp2": _SSP2}


def rk4_step(y, rhs, dt):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def imex_step(y, explicit, implicit, dt, scheme="imex"):
    """One IMEX-RK step of y' = explicit(y) + L y.

    ``scheme="imex"`` is forward/backward Euler (first order);
    ``scheme="imex3"`` is the four-stage third-order ARS(4,4,3) scheme;
    ``scheme="imex-ssp2"`` is the second-order IMEX-SSP2(2,2,2) scheme.
    """
    tab = IMEX_TABLEAUX[scheme]
    if len(tab) == 3:
        return _imex_general(y, explicit, implicit, dt, *tab)
    ahat, a = tab
    s = a.shape[0]
    F = [explicit(y)]
    G = [None]
    Y = y
    for i in range(1, s):
        r = y + dt * sum(ahat[i, j] * F[j] for j in range(i))
        for j in range(1, i):
            if a[i, j]:
                r = r + dt * a[i, j] * G[j]
        c = dt * a[i, i]
        Y = implicit.solve(r, c)
        G.append((Y - r) / c)
        if i < s - 1:
            F.append(explicit(Y))
    return Y


def _imex_general(y, explicit, implicit, dt, ahat, a, b):
    # every stage implicit (a_ii > 0); shared weights b for both parts
    s = a.shape[0]
    F, G = [], []
    for i in range(s):
        r = y
        for j in range(i):
            r = r + dt * (ahat[i, j] * F[j] + a[i, j] * G[j])
        c = dt * a[i, i]
        Y = implicit.solve(r, c)
        G.append((Y - r) / c)
        F.append(explicit(Y))
    return y + dt * sum(b[j] * (F[j] + G[j]) for j in range(s))


def time_integrator(state, rhs, dt, scheme="rk4", implicit=None, umax=None, spacing=None):
    """Advance ``state`` by one step.

    ``rhs`` is the full right-hand side for RK4 and the explicit part for the
    IMEX schemes, whose stiff linear part is ``implicit``.  When ``umax`` and
    ``spacing`` are given the advective CFL limit is enforced first.
    """
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if umax is not None and spacing is not None:
        check_cfl(dt, umax, spacing)
    if scheme == "rk4":
        if implicit is not None:
            full = rhs

            def rhs(y):
                return full(y) + implicit.apply(y)

        return rk4_step(state, rhs, dt)
    if scheme in IMEX_TABLEAUX:
        if implicit is None:
            implicit = DiagonalOperator(0.0)
        return imex_step(state, rhs, implicit, dt, scheme)
    raise ParameterError(f"unknown scheme {scheme!r}")
