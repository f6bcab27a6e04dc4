"""Rotating infinite-Prandtl convection in an x-z slice (fields independent of y).

Momentum is the instantaneous Stokes balance

    -Lap u - f v + p_x = 0,   -Lap v + f u = 0,   -Lap w + p_z = R T,   u_x + w_z = 0,

with f = 1/E and u = v = w = 0 at z = 0, 1.  Vertically the grid is
staggered: u, v, p sit at cell centres, w and T at nodes.  Each horizontal
Fourier mode gives a banded linear system, solved by banded elimination with
unknowns interleaved level by level.  T then advances by an IMEX step with
implicit diffusion.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded

from ..errors import ContractViolation, SolverAbort
from ..fields import ChannelDomain, ScalarField
from ..integrators import check_cfl, imex_step
from .boussinesq import GUARD_TOL, _dealias, _pad, _wavenumbers, bmv
from .vertical import d2_matrix

RESIDUAL_TOL = 1e-8


def centre_d2(nz):
    """Second difference at cell centres with zero wall values (ghost = -first)."""
    h = 1.0 / nz
    A = np.diag(-2.0 * np.ones(nz)) + np.diag(np.ones(nz - 1), 1) + np.diag(np.ones(nz - 1), -1)
    A[0, 0] = A[-1, -1] = -3.0
    return A / h**2


def node_gradient(nz):
    """(p_j - p_{j-1}) / h on interior nodes j = 1..nz-1 from centre values."""
    G = np.zeros((nz - 1, nz))
    for j in range(nz - 1):
        G[j, j] = -1.0
        G[j, j + 1] = 1.0
    return G * nz


def _index(nz):
    """Interleaved positions of u_i, v_i, p_i (i < nz) and w_j (1 <= j < nz)."""
    iu = 4 * np.arange(nz)
    return iu, iu + 1, iu + 2, iu[:-1] + 3


def stokes_matrix(nz, k, f):
    """Dense interleaved matrix of the mode-k Stokes system."""
    n = 4 * nz - 1
    iu, iv, ip, iw = _index(nz)
    Dc = centre_d2(nz) - k * k * np.eye(nz)
    Dn = d2_matrix(nz) - k * k * np.eye(nz - 1)
    G = node_gradient(nz)
    A = np.zeros((n, n), dtype=complex)
    A[np.ix_(iu, iu)] = -Dc
    A[iu, iv] = -f
    A[iu, ip] = 1j * k
    A[np.ix_(iv, iv)] = -Dc
    A[iv, iu] = f
    A[np.ix_(iw, iw)] = -Dn
    A[np.ix_(iw, ip)] = G
    A[ip, iu] = 1j * k
    A[np.ix_(ip, iw)] = -G.T
    return A


def to_banded(A, lower=4, upper=4):
    n = A.shape[0]
    ab = np.zeros((lower + upper + 1, n), dtype=A.dtype)
    for d in range(-lower, upper + 1):
        diag = np.diagonal(A, d)
        if d >= 0:
            ab[upper - d, d:] = diag
        else:
            ab[upper - d, : n + d] = diag
    return ab


def stokes_rhs(nz, rhs_w):
    iu, iv, ip, iw = _index(nz)
    b = np.zeros((4 * nz - 1,) + rhs_w.shape[1:], dtype=complex)
    b[iw] = rhs_w
    return b


def unpack(x, nz):
    iu, iv, ip, iw = _index(nz)
    return x[iu], x[iv], x[ip], x[iw]


@dataclass
class StokesSolution:
    u: np.ndarray  # centres, shape (nk, nz)
    v: np.ndarray
    p: np.ndarray
    w: np.ndarray  # interior nodes, shape (nk, nz-1)
    residual: float


class RotatingStokes:
    """Banded per-mode Stokes solves and the linear theta -> velocity response."""

    def __init__(self, domain, E, R):
        if not E > 0:
            raise ContractViolation("E must be positive (use inf for no rotation)")
        self.domain = domain
        self.E, self.R = E, R
        self.f = 0.0 if np.isinf(E) else 1.0 / E
        nz = domain.nz
        self.k = _wavenumbers(domain)
        self.bands = [None] + [to_banded(stokes_matrix(nz, k, self.f)) for k in self.k[1:]]
        self.sparse = [None] + [sparse.csr_matrix(stokes_matrix(nz, k, self.f)) for k in self.k[1:]]
        eye = np.eye(nz - 1)
        # response of (u at nodes, w) to unit theta at each interior node
        self.Wresp = np.zeros((len(self.k), nz - 1, nz - 1), dtype=complex)
        self.Uresp = np.zeros_like(self.Wresp)
        for j in range(1, len(self.k)):
            x = solve_banded((4, 4), self.bands[j], stokes_rhs(nz, R * eye))
            u, _, _, w = unpack(x, nz)
            self.Wresp[j] = w
            self.Uresp[j] = 0.5 * (u[:-1] + u[1:])

    def solve(self, T_hat):
        """T_hat: horizontal Fourier coefficients of T on interior nodes (nk, nz-1)."""
        nz = self.domain.nz
        nk = len(self.k)
        u = np.zeros((nk, nz), dtype=complex)
        v = np.zeros_like(u)
        p = np.zeros_like(u)
        w = np.zeros((nk, nz - 1), dtype=complex)
        worst = 0.0
        # k = 0: u = v = w = 0, hydrostatic pressure with zero vertical mean
        p0 = np.concatenate([[0.0], np.cumsum(self.R * T_hat[0] / nz)])
        p[0] = p0 - p0.mean()
        for j in range(1, nk):
            b = stokes_rhs(nz, self.R * T_hat[j])
            try:
                x = solve_banded((4, 4), self.bands[j], b)
            except np.linalg.LinAlgError as exc:
                raise SolverAbort(f"singular Stokes system at mode {j}") from exc
            r = self.sparse[j] @ x - b
            scale = max(np.abs(b).max(), 1e-300)
            if np.abs(b).max() > 0:
                worst = max(worst, float(np.abs(r).max() / scale))
            u[j], v[j], p[j], w[j] = unpack(x, nz)
        return StokesSolution(u, v, p, w, worst)


def nonrotating_stokes(nz, k, R, T_hat_mode):
    """Independently assembled non-rotating solve in block order [u; p; w]."""
    Dc = centre_d2(nz) - k * k * np.eye(nz)
    Dn = d2_matrix(nz) - k * k * np.eye(nz - 1)
    G = node_gradient(nz)
    Z = np.zeros
    A = np.block(
        [
            [-Dc, 1j * k * np.eye(nz), Z((nz, nz - 1))],
            [1j * k * np.eye(nz), Z((nz, nz)), -G.T],
            [Z((nz - 1, nz)), G, -Dn],
        ]
    )
    b = np.concatenate([np.zeros(2 * nz), R * T_hat_mode])
    x = np.linalg.solve(A, b)
    return x[:nz], x[nz : 2 * nz], x[2 * nz :]


@dataclass
class RotatingIPState:
    T: ScalarField
    E: float = np.inf
    R: float = 2000.0
    t: float = 0.0
    flags: list = field(default_factory=list)

    def __post_init__(self):
        d = self.T.domain
        if not isinstance(d, ChannelDomain) or d.dim != 2:
            raise ContractViolation("the rotating solver runs on a 2D ChannelDomain")
        if np.any(self.T.values[:, 0] != 1.0) or np.any(self.T.values[:, -1] != 0.0):
            raise ContractViolation("T must equal 1 at z = 0 and 0 at z = 1")

    @property
    def domain(self):
        return self.T.domain


class _Diffusion:
    def __init__(self, domain):
        nz = domain.nz
        k = _wavenumbers(domain)
        self.M = np.stack([d2_matrix(nz) - kk * kk * np.eye(nz - 1) for kk in k])
        self._cache = {}

    def solve(self, r, c):
        key = float(c)
        if key not in self._cache:
            self._cache = {key: np.linalg.inv(np.eye(self.M.shape[-1]) - c * self.M)}
        return bmv(self._cache[key], r)

    def apply(self, y):
        return bmv(self.M, y)


class RotatingIP:
    def __init__(self, domain, E, R, scheme="imex3"):
        self.domain = domain
        self.stokes = RotatingStokes(domain, E, R)
        self.diff = _Diffusion(domain)
        self.scheme = scheme
        self.k = self.stokes.k[:, None]
        self.mask = _dealias(domain)
        _, z = domain.mesh()
        self.base = 1.0 - z

    def to_spectral(self, T):
        return np.fft.rfft(T - self.base, axis=0)[:, 1:-1]

    def velocities(self, th):
        """(u, w) on all nodes from theta coefficients, via the precomputed response."""
        n = self.domain.nx
        uh = np.matmul(self.stokes.Uresp, th[..., None])[..., 0]
        wh = np.matmul(self.stokes.Wresp, th[..., None])[..., 0]
        return np.fft.irfft(_pad(uh), n=n, axis=0), np.fft.irfft(_pad(wh), n=n, axis=0), wh

    def explicit(self, th):
        d = self.domain
        n, h = d.nx, 1.0 / d.nz
        u, w, wh = self.velocities(th)
        full = _pad(th)
        tx = np.fft.irfft(1j * self.k * full, n=n, axis=0)[:, 1:-1]
        f = np.fft.irfft(full, n=n, axis=0)
        tz = (f[:, 2:] - f[:, :-2]) / (2 * h)
        adv = u[:, 1:-1] * tx + w[:, 1:-1] * tz
        return -np.fft.rfft(adv, axis=0) * self.mask + wh

    def max_speed(self, th):
        u, w, _ = self.velocities(th)
        return float(np.abs(u).max()), float(np.abs(w).max())

    def step_spectral(self, th, dt, check=True):
        if check:
            check_cfl(dt, max(self.max_speed(th)), (min(self.domain.spacing),) * 2)
        th = imex_step(th, self.explicit, self.diff, dt, self.scheme)
        if not np.all(np.isfinite(th)):
            raise SolverAbort("non-finite temperature")
        return th

    def temperature(self, th):
        T = np.fft.irfft(_pad(th), n=self.domain.nx, axis=0) + self.base
        T[:, 0], T[:, -1] = 1.0, 0.0
        return T

    def diagnose(self, T):
        """Direct banded solve for (u, v, w, p) from T, with its residual."""
        T_hat = np.fft.rfft(T, axis=0)[:, 1:-1]
        sol = self.stokes.solve(T_hat)
        if sol.residual > RESIDUAL_TOL:
            raise SolverAbort(f"Stokes residual {sol.residual:.2e} above tolerance")
        return sol


def step_infinite_prandtl_rotating(state, dt, solver=None):
    solver = solver or RotatingIP(state.domain, state.E, state.R)
    th = solver.step_spectral(solver.to_spectral(state.T.values), dt)
    T = solver.temperature(th)
    worst = max(0.0, -T.min(), T.max() - 1.0)
    flags = list(state.flags)
    if worst > GUARD_TOL:
        T = np.clip(T, 0.0, 1.0)
        flags.append(("T-bounds", state.t + dt, worst))
    return RotatingIPState(ScalarField(state.domain, T), state.E, state.R, state.t + dt, flags)


def run_rotating(state, t_end, dt_max=2e-3, courant=0.35, sample_every=5, history=None):
    """Advance with piecewise-constant dt; returns (state, history)."""
    from .nusselt import new_history, record

    d = state.domain
    solver = RotatingIP(d, state.E, state.R)
    th = solver.to_spectral(state.T.values)
    history = history if history is not None else new_history()
    hx, hz = d.spacing
    t, steps, dt = state.t, 0, None

    def sample(th, t):
        u, w, _ = solver.velocities(th)
        record(history, t, np.stack([u, w]), solver.temperature(th), d)

    if len(history.array("t")) == 0:
        sample(th, t)
    while t < t_end - 1e-12:
        umax, wmax = solver.max_speed(th)
        rate = umax / hx + wmax / hz
        tgt = dt_max if rate == 0 else min(dt_max, courant / rate)
        if dt is None or dt > 1.3 * tgt or dt < 0.5 * tgt:
            dt = tgt
        step = min(dt, t_end - t)
        th = solver.step_spectral(th, step, check=False)
        t += step
        steps += 1
        if steps % sample_every == 0 or t >= t_end - 1e-12:
            sample(th, t)
    final = RotatingIPState(ScalarField(d, solver.temperature(th)), state.E, state.R, t, list(state.flags))
    return final, history
