"""2D (x-z) Boussinesq convection between no-slip walls.

Unknowns are the streamfunction psi (u = d_z psi, w = -d_x psi) and the
temperature perturbation theta = T - (1 - z), both on the vertical nodes with
zero wall values.  Horizontally the fields are Fourier series; vertically
they use second-order differences, with psi' = 0 at the walls imposed by a
reflected ghost node.  Vorticity zeta = Lap psi evolves by

    zeta_t + u.grad zeta = sigma Lap zeta - sigma Ra d_x theta,
    theta_t + u.grad theta = w + Lap theta,

with the stiff linear parts treated implicitly.  Since u is built from psi
by differences that commute, the discrete divergence vanishes identically.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, SolverAbort
from ..fields import ChannelDomain, ScalarField, VectorField
from ..integrators import check_cfl, imex_step
from .vertical import d2_matrix, d4_clamped_matrix

GUARD_TOL = 1e-8


def _wavenumbers(domain):
    return 2 * np.pi / domain.L * np.fft.rfftfreq(domain.nx, 1.0 / domain.nx)


def _dealias(domain):
    idx = np.arange(domain.nx // 2 + 1)
    return (idx < domain.nx / 3.0)[:, None]


def bmv(S, r):
    """Batched real matrix times complex vectors: S[k] @ r[k]."""
    out = np.matmul(S, np.stack([r.real, r.imag], axis=-1))
    return out[..., 0] + 1j * out[..., 1]


def _pad(a):
    """Interior-node array -> full nodes with zero walls (last axis)."""
    out = np.zeros(a.shape[:-1] + (a.shape[-1] + 2,), dtype=a.dtype)
    out[..., 1:-1] = a
    return out


class StreamOperator:
    """Per-mode vertical matrices and the implicit solve for (zeta, theta)."""

    def __init__(self, domain, sigma):
        self.domain = domain
        self.sigma = sigma
        nz = domain.nz
        self.k = _wavenumbers(domain)
        D2 = d2_matrix(nz)
        D4 = d4_clamped_matrix(nz)
        eye = np.eye(nz - 1)
        self.M = np.stack([D2 - k * k * eye for k in self.k])
        self.A = np.stack([D4 - 2 * k * k * D2 + k**4 * eye for k in self.k])
        self.Minv = np.linalg.inv(self.M)
        self._cache = {}

    def _solvers(self, c):
        key = float(c)
        if key not in self._cache:
            eye = np.eye(self.M.shape[-1])
            S_zeta = self.M @ np.linalg.inv(self.M - c * self.sigma * self.A)
            S_theta = np.linalg.inv(eye - c * self.M)
            self._cache = {key: (S_zeta, S_theta)}
        return self._cache[key]

    def solve(self, r, c):
        S_zeta, S_theta = self._solvers(c)
        out = np.empty_like(r)
        out[0] = bmv(S_zeta, r[0])
        out[1] = bmv(S_theta, r[1])
        return out

    def apply(self, y):
        out = np.empty_like(y)
        psi = bmv(self.Minv, y[0])
        out[0] = self.sigma * bmv(self.A, psi)
        out[1] = bmv(self.M, y[1])
        return out


@dataclass
class BoussinesqState:
    """psi and T on the nodes of a 2D ChannelDomain; u is derived from psi."""

    psi: ScalarField
    T: ScalarField
    sigma: float = 1.0
    Ra: float = 1e4
    t: float = 0.0
    flags: list = field(default_factory=list)

    def __post_init__(self):
        d = self.T.domain
        if not isinstance(d, ChannelDomain) or d.dim != 2:
            raise ContractViolation("Boussinesq runs on a 2D ChannelDomain")
        if np.any(self.T.values[:, 0] != 1.0) or np.any(self.T.values[:, -1] != 0.0):
            raise ContractViolation("T must equal 1 at z = 0 and 0 at z = 1")

    @property
    def domain(self):
        return self.T.domain

    @property
    def u(self):
        return VectorField(self.domain, velocity_from_psi(self.psi.values, self.domain))

    @classmethod
    def conduction(cls, domain, sigma=1.0, Ra=1e4):
        _, z = domain.mesh()
        return cls(ScalarField(domain, np.zeros(domain.shape)), ScalarField(domain, 1.0 - z), sigma, Ra)

    @classmethod
    def perturbed(cls, domain, sigma=1.0, Ra=1e4, amplitude=1e-3, seed=0):
        """Conduction plus a small random perturbation confined to low modes."""
        rng = np.random.default_rng(seed)
        x, z = domain.mesh()
        theta = np.zeros(domain.shape)
        for m in range(1, 5):
            a, b = rng.standard_normal(2)
            theta += (a * np.cos(2 * np.pi * m * x / domain.L) + b * np.sin(2 * np.pi * m * x / domain.L)) * np.sin(
                np.pi * z
            )
        theta *= amplitude / np.abs(theta).max()
        theta[:, [0, -1]] = 0.0
        return cls(ScalarField(domain, np.zeros(domain.shape)), ScalarField(domain, 1.0 - z + theta), sigma, Ra)


def velocity_from_psi(psi, domain):
    """u = d_z psi (centred; zero at the walls by psi' = 0), w = -d_x psi."""
    nz = domain.nz
    u = np.zeros_like(psi)
    u[:, 1:-1] = (psi[:, 2:] - psi[:, :-2]) * (nz / 2.0)
    k = _wavenumbers(domain)
    w = np.fft.irfft(-1j * k[:, None] * np.fft.rfft(psi, axis=0), n=domain.nx, axis=0)
    return np.stack([u, w])


class Boussinesq2D:
    def __init__(self, domain, Ra, sigma=1.0, scheme="imex3"):
        self.domain = domain
        self.Ra = Ra
        self.sigma = sigma
        self.scheme = scheme
        self.op = StreamOperator(domain, sigma)
        self.k = self.op.k[:, None]
        self.mask = _dealias(domain)
        _, z = domain.mesh()
        self.base = 1.0 - z

    # state <-> spectral ---------------------------------------------------------
    def to_spectral(self, state):
        psi_h = np.fft.rfft(state.psi.values, axis=0)[:, 1:-1]
        theta_h = np.fft.rfft(state.T.values - self.base, axis=0)[:, 1:-1]
        zeta_h = bmv(self.op.M, psi_h)
        return np.stack([zeta_h, theta_h])

    def physical(self, y):
        n = self.domain.nx
        psi_h = bmv(self.op.Minv, y[0])
        psi = np.fft.irfft(_pad(psi_h), n=n, axis=0)
        theta = np.fft.irfft(_pad(y[1]), n=n, axis=0)
        return psi, theta

    # right-hand side -----------------------------------------------------------
    def explicit(self, y):
        d = self.domain
        n, nz = d.nx, d.nz
        h = 1.0 / nz
        psi_h = bmv(self.op.Minv, y[0])
        psi_full = _pad(psi_h)
        zeta_full = _pad(y[0])
        zeta_full[:, 0] = 2 * psi_full[:, 1] / h**2
        zeta_full[:, -1] = 2 * psi_full[:, -2] / h**2
        theta_full = _pad(y[1])

        ik = 1j * self.k
        u = np.zeros((n, nz + 1))
        u[:, 1:-1] = np.fft.irfft((psi_full[:, 2:] - psi_full[:, :-2]) / (2 * h), n=n, axis=0)
        w = np.fft.irfft(-ik * psi_full, n=n, axis=0)

        def adv(fh):
            fx = np.fft.irfft(ik * fh, n=n, axis=0)[:, 1:-1]
            f = np.fft.irfft(fh, n=n, axis=0)
            fz = (f[:, 2:] - f[:, :-2]) / (2 * h)
            return u[:, 1:-1] * fx + w[:, 1:-1] * fz

        n_zeta = -np.fft.rfft(adv(zeta_full), axis=0) * self.mask
        n_theta = -np.fft.rfft(adv(theta_full), axis=0) * self.mask
        n_zeta -= self.sigma * self.Ra * ik * y[1]
        n_theta += -ik * psi_h
        return np.stack([n_zeta, n_theta])

    def max_speed(self, y):
        psi, _ = self.physical(y)
        u = velocity_from_psi(psi, self.domain)
        return float(np.abs(u[0]).max()), float(np.abs(u[1]).max())

    def courant(self, y, dt):
        umax, wmax = self.max_speed(y)
        hx, hz = self.domain.spacing
        return dt * (umax / hx + wmax / hz)

    def step_spectral(self, y, dt, check=True):
        if check:
            umax, wmax = self.max_speed(y)
            check_cfl(dt, max(umax, wmax), (min(self.domain.spacing),) * 2)
        y = imex_step(y, self.explicit, self.op, dt, self.scheme)
        if not np.all(np.isfinite(y)):
            raise SolverAbort("non-finite values in the Boussinesq state")
        return y

    def guard(self, y):
        """Clip T into [0, 1]; returns (y, worst violation)."""
        _, theta = self.physical(y)
        T = theta + self.base
        worst = max(0.0, -T.min(), T.max() - 1.0)
        if worst > GUARD_TOL:
            T = np.clip(T, 0.0, 1.0)
            y = y.copy()
            y[1] = np.fft.rfft(T - self.base, axis=0)[:, 1:-1]
        return y, worst

    def state_from(self, y, t, flags):
        psi, theta = self.physical(y)
        T = theta + self.base
        T[:, 0] = 1.0
        T[:, -1] = 0.0
        d = self.domain
        return BoussinesqState(ScalarField(d, psi), ScalarField(d, T), self.sigma, self.Ra, t, flags)


def step_boussinesq(state, dt, solver=None, scheme="imex3"):
    solver = solver or Boussinesq2D(state.domain, state.Ra, state.sigma, scheme)
    y = solver.step_spectral(solver.to_spectral(state), dt)
    y, worst = solver.guard(y)
    flags = list(state.flags)
    if worst > GUARD_TOL:
        flags.append(("T-bounds", state.t + dt, worst))
    return solver.state_from(y, state.t + dt, flags)


def kinetic_energy(psi, domain):
    u = velocity_from_psi(psi, domain)
    wz = domain.z_weights()
    return 0.5 * float(np.mean(np.sum(u**2, axis=0) @ wz))


def linear_growth_rates(domain, Ra, sigma=1.0, modes=None):
    """Eigenvalues of the discretized linearization about conduction, per mode.

    Returns {k_index: max real part}.  The generalized problem
    lambda [M 0; 0 I] [psi; theta] = [sigma A, -sigma Ra ik; -ik, M] [psi; theta]
    is reduced by inverting M.
    """
    from scipy.linalg import eig

    op = StreamOperator(domain, sigma)
    n = domain.nz - 1
    out = {}
    idx = range(1, len(op.k)) if modes is None else modes
    for j in idx:
        k = op.k[j]
        top = np.hstack([sigma * op.A[j], -sigma * Ra * 1j * k * np.eye(n)])
        bot = np.hstack([-1j * k * np.eye(n), op.M[j]])
        lhs = np.vstack([np.hstack([op.M[j], np.zeros((n, n))]), np.hstack([np.zeros((n, n)), np.eye(n)])])
        lam = eig(np.vstack([top, bot]), lhs, right=False)
        out[j] = float(np.max(lam.real))
    return out


@dataclass
class ConvectionRun:
    state: BoussinesqState
    history: object
    steps: int
    dt_changes: int


def run_boussinesq(state, t_end, dt_max=1e-3, courant=0.35, sample_every=5, scheme="imex3", history=None):
    """Advance to ``t_end`` with a piecewise-constant dt.

    dt is reset to the target Courant number only when the current one
    leaves [0.5 x, 1.3 x] of that target, so the implicit factorizations are
    rebuilt rarely.  Diagnostics are recorded every ``sample_every`` steps.
    """
    from .nusselt import new_history, record

    d = state.domain
    solver = Boussinesq2D(d, state.Ra, state.sigma, scheme)
    y = solver.to_spectral(state)
    history = history if history is not None else new_history()
    hx, hz = d.spacing
    t, flags, steps, changes = state.t, list(state.flags), 0, 0
    dt = None

    def target(y):
        umax, wmax = solver.max_speed(y)
        rate = umax / hx + wmax / hz
        return dt_max if rate == 0 else min(dt_max, courant / rate)

    if len(history.array("t")) == 0:
        record(history, t, state.u.values, state.T.values, d)
    while t < t_end - 1e-12:
        tgt = target(y)
        if dt is None or dt > 1.3 * tgt or dt < 0.5 * tgt:
            dt = tgt
            changes += 1
        step = min(dt, t_end - t)
        y = solver.step_spectral(y, step, check=False)
        y, worst = solver.guard(y)
        if worst > GUARD_TOL:
            flags.append(("T-bounds", t + step, worst))
        t += step
        steps += 1
        if steps % sample_every == 0 or t >= t_end - 1e-12:
            psi, theta = solver.physical(y)
            T = theta + solver.base
            record(history, t, velocity_from_psi(psi, d), T, d)
    return ConvectionRun(solver.state_from(y, t, flags), history, steps, changes)
