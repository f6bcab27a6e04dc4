"""Passive reactive scalar with KPP reaction in a truncated strip.

    T_t + u . grad T - kappa lap T = (v0^2 / 4 kappa) T (1 - T)

on [-X, X] x [0, 1], Neumann at the walls, T = 1 far behind and T = 0 far
ahead of the front.  Diffusion is implicit; advection (MUSCL fluxes with a
van Leer limiter) and reaction are explicit.  A co-moving window shifts the
grid by whole cells to keep the front centred.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import simpson

from .errors import CFLViolation, ContractViolation, ParameterError, SolverAbort
from .fields import ScalarField, StripDomain
from .integrators import imex_step

MAX_PRINCIPLE_TOL = 1e-8
EDGE_LO, EDGE_HI = 1e-2, 0.99


def reaction_rate(kappa, v0):
    return v0**2 / (4.0 * kappa)


def default_strip(kappa, v0, nx=1024, ny=32, X=None):
    """Strip with X = max(20, 40 l), l = kappa / v0, unless X is given."""
    ell = kappa / v0
    return StripDomain(X=max(20.0, 40.0 * ell) if X is None else X, nx=nx, ny=ny)


def initial_front(domain, kappa, v0):
    """T = 1 for x < 0 and exp(-x / l) for x >= 0."""
    ell = kappa / v0
    x, _ = domain.mesh()
    return ScalarField(domain, np.where(x < 0, 1.0, np.exp(-np.maximum(x, 0.0) / ell)))


def shear_profile(domain, kind="sine", amplitude=1.0, table=None):
    """Cell-centred samples of a mean-zero shear u(y)."""
    y = domain.coords()[1]
    if kind == "sine":
        u = np.sin(2 * np.pi * y)
    elif kind == "sawtooth":
        # triangle wave with zero mean: +1 at y = 1/4, -1 at y = 3/4
        u = 1 - 4 * np.abs(((y + 0.25) % 1.0) - 0.5)
    elif kind == "tabulated":
        ty, tu = np.asarray(table[0]), np.asarray(table[1])
        u = np.interp(y, ty, tu)
        u = u - u.mean()
    elif kind == "none":
        u = np.zeros_like(y)
    else:
        raise ParameterError(f"unknown profile kind {kind!r}")
    return amplitude * u


@dataclass
class FrontState:
    """Temperature on the strip plus the prescribed flow.

    ``flow`` is either an array of ny cell-centred shear samples u(y) or a
    callable psi(x, y, t) stream function (u = psi_y, v = -psi_x) whose values
    agree at y = 0 and y = 1.  ``offset`` is the total co-moving shift; the
    absolute abscissa of grid point x is x + offset.
    """

    T: ScalarField
    kappa: float
    v0: float
    flow: object = None
    t: float = 0.0
    offset: float = 0.0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.T.domain, StripDomain):
            raise ContractViolation("FrontState lives on a StripDomain")
        if self.kappa <= 0 or self.v0 <= 0:
            raise ParameterError("kappa and v0 must be positive")
        if self.flow is not None and not callable(self.flow):
            u = np.asarray(self.flow, dtype=float)
            if u.shape != (self.T.domain.ny,):
                raise ContractViolation("shear samples must have length ny")
            if abs(u.mean()) > 1e-8 * max(1.0, np.abs(u).max()):
                raise ContractViolation("shear profile must have zero mean across the strip")
            self.flow = u

    @property
    def ell(self):
        return self.kappa / self.v0


def _van_leer(a, b):
    prod = a * b
    return np.where(prod > 0, 2 * prod / np.where(prod > 0, a + b, 1.0), 0.0)


class KPPSolver:
    """Discrete operators for one strip / parameter set."""

    def __init__(self, domain, kappa, v0, scheme="imex-ssp2", far_field=(1.0, 0.0)):
        self.d = domain
        self.far_field = tuple(float(v) for v in far_field)
        self.kappa = kappa
        self.v0 = v0
        self.r = reaction_rate(kappa, v0)
        self.scheme = scheme
        self.hx, self.hy = domain.spacing
        self._lu = {}
        self.L, self.b = self._laplacian()

    def _laplacian(self):
        nx, ny, hx, hy = self.d.nx, self.d.ny, self.hx, self.hy

        def lap1(n, h, left, right):
            main = -2.0 * np.ones(n)
            main[0] += left
            main[-1] += right
            return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]) / h**2

        # ghost closures: Dirichlet T_g = 2 T_b - T_0 (coefficient -1), Neumann T_g = T_0 (+1)
        Lx = lap1(nx, hx, -1.0, -1.0)
        Ly = lap1(ny, hy, 1.0, 1.0) if ny > 1 else sp.csr_matrix((1, 1))
        L = sp.kron(Lx, sp.identity(ny)) + sp.kron(sp.identity(nx), Ly)
        b = np.zeros((nx, ny))
        behind, ahead = self.far_field
        b[0, :] = 2.0 * behind / hx**2
        b[-1, :] += 2.0 * ahead / hx**2
        return L.tocsc(), b.ravel()

    def diffusion(self, T):
        return (self.L @ T.ravel() + self.b).reshape(T.shape)

    def solve(self, r, c):
        """(I - c kappa L) T = r + c kappa b."""
        key = round(c, 15)
        lu = self._lu.get(key)
        if lu is None:
            A = sp.identity(self.L.shape[0], format="csc") - c * self.kappa * self.L
            lu = self._lu[key] = spla.splu(A)
        return lu.solve(r.ravel() + c * self.kappa * self.b).reshape(r.shape)

    def face_velocities(self, flow, t, offset):
        nx, ny = self.d.nx, self.d.ny
        if flow is None:
            return np.zeros((nx + 1, ny)), np.zeros((nx, ny + 1))
        if not callable(flow):
            return np.broadcast_to(flow, (nx + 1, ny)), np.zeros((nx, ny + 1))
        xf = -self.d.X + np.arange(nx + 1) * self.hx + offset
        yf = np.arange(ny + 1) * self.hy
        psi = flow(xf[:, None], yf[None, :], t)
        u = (psi[:, 1:] - psi[:, :-1]) / self.hy
        v = -(psi[1:, :] - psi[:-1, :]) / self.hx
        v[:, 0] = v[:, -1] = 0.0
        return u, v

    def advection(self, T, uf, vf):
        """Flux-form MUSCL divergence of (u T, v T) with far-field / reflective ghosts."""
        nx, ny = T.shape
        out = np.zeros_like(T)
        if np.any(uf):
            g = np.empty((nx + 4, ny))
            g[2:-2] = T
            g[:2], g[-2:] = self.far_field
            d = np.diff(g, axis=0)
            s = _van_leer(d[:-1], d[1:])  # slopes for cells -1 .. nx
            left = g[1:-2] + 0.5 * s[:-1]  # state left of face i+1/2, faces 0..nx
            right = g[2:-1] - 0.5 * s[1:]
            flux = np.where(uf > 0, uf * left, uf * right)
            out += (flux[1:] - flux[:-1]) / self.hx
        if ny > 1 and np.any(vf):
            g = np.empty((nx, ny + 4))
            g[:, 2:-2] = T
            g[:, :2] = T[:, 1::-1]
            g[:, -2:] = T[:, :-3:-1]
            d = np.diff(g, axis=1)
            s = _van_leer(d[:, :-1], d[:, 1:])
            left = g[:, 1:-2] + 0.5 * s[:, :-1]
            right = g[:, 2:-1] - 0.5 * s[:, 1:]
            flux = np.where(vf > 0, vf * left, vf * right)
            out += (flux[:, 1:] - flux[:, :-1]) / self.hy
        return out

    def explicit(self, T, uf, vf):
        return -self.advection(T, uf, vf) + self.r * T * (1.0 - T)

    def rhs(self, T, uf, vf):
        return self.explicit(T, uf, vf) + self.kappa * self.diffusion(T)

    def max_dt(self, uf, vf):
        """0.5 * min(advective CFL limit, 4 kappa / v0^2)."""
        umax = max(np.abs(uf).max(initial=0.0) / self.hx, np.abs(vf).max(initial=0.0) / self.hy)
        lim = 4 * self.kappa / self.v0**2
        if umax > 0:
            lim = min(lim, 1.0 / umax)
        return 0.5 * lim


class _Implicit:
    def __init__(self, solver):
        self.s = solver

    def solve(self, r, c):
        return self.s.solve(r, c)


def front_edges(T, domain):
    """Trailing and leading x positions of the reaction zone (grid frame)."""
    x = domain.coords()[0]
    hot = np.min(T, axis=1) < EDGE_HI
    cold = np.max(T, axis=1) > EDGE_LO
    trail = x[np.argmax(hot)] if hot.any() else x[-1]
    lead = x[len(x) - 1 - np.argmax(cold[::-1])] if cold.any() else x[0]
    return float(trail), float(lead)


def shift_window(T, cells):
    """Shift T left by ``cells`` whole cells (positive = window moves right)."""
    if cells == 0:
        return T
    out = np.empty_like(T)
    if cells > 0:
        out[:-cells] = T[cells:]
        out[-cells:] = 0.0
    else:
        out[-cells:] = T[:cells]
        out[:-cells] = 1.0
    return out


def recentre(state, solver=None, margin_lengths=10.0, tolerance_cells=2):
    """Keep the front centred; abort when it no longer fits with the margin."""
    d = state.T.domain
    hx = d.spacing[0]
    margin = margin_lengths * state.ell
    trail, lead = front_edges(state.T.values, d)
    mid = 0.5 * (trail + lead)
    cells = int(np.round(mid / hx))
    T = state.T.values
    offset = state.offset
    if abs(cells) > tolerance_cells:
        T = shift_window(T, cells)
        offset += cells * hx
        trail -= cells * hx
        lead -= cells * hx
    if trail < -d.X + margin or lead > d.X - margin:
        raise SolverAbort(
            f"front [{trail:.3g}, {lead:.3g}] within {margin_lengths} reaction lengths of the "
            f"strip ends (X = {d.X}); window shifting cannot recover"
        )
    return replace(state, T=ScalarField(d, T), offset=offset)


def _guard(T, flags):
    lo, hi = float(T.min()), float(T.max())
    if lo < -MAX_PRINCIPLE_TOL or hi > 1 + MAX_PRINCIPLE_TOL:
        flags["max_principle_violations"] = flags.get("max_principle_violations", 0) + 1
        flags["worst_violation"] = max(flags.get("worst_violation", 0.0), -lo, hi - 1)
    return np.clip(T, 0.0, 1.0)


def step_kpp(state, dt, solver=None, shift=True):
    """One IMEX step; raises CFLViolation if dt exceeds the stability limit."""
    d = state.T.domain
    solver = solver or KPPSolver(d, state.kappa, state.v0)
    uf, vf = solver.face_velocities(state.flow, state.t, state.offset)
    limit = solver.max_dt(uf, vf)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(0.5 * dt / limit, 0.5, "advective/reactive")

    def explicit(T):
        return solver.explicit(T, uf, vf)

    T = imex_step(state.T.values, explicit, _Implicit(solver), dt, solver.scheme)
    if not np.all(np.isfinite(T)):
        raise SolverAbort("non-finite temperature")
    flags = dict(state.flags)
    T = _guard(T, flags)
    out = replace(state, T=ScalarField(d, T), t=state.t + dt, flags=flags)
    if shift:
        out = recentre(out, solver)
    return out


def kpp_rhs(state, solver=None):
    d = state.T.domain
    solver = solver or KPPSolver(d, state.kappa, state.v0)
    uf, vf = solver.face_velocities(state.flow, state.t, state.offset)
    return ScalarField(d, solver.rhs(state.T.values, uf, vf))


def bulk_burning_rate(state, rhs=None):
    """V(t) = integral of dT/dt over the strip, by quadrature of the PDE right-hand side."""
    if rhs is None:
        rhs = kpp_rhs(state)
    return float(np.sum(rhs.values) * state.T.domain.cell_volume)


def avg_burning_rate(series, tau):
    """(1/tau) * integral_0^tau V dt by the trapezoid rule.

    ``series`` is a (t, V) pair of arrays or a DiagnosticsSeries with a 'V' channel.
    """
    if hasattr(series, "array"):
        t, V = series.array("t"), series.array("V")
    else:
        t, V = (np.asarray(a, dtype=float) for a in series)
    if not tau > 0:
        raise ParameterError("tau must be positive")
    if t[0] > 1e-12 * max(1.0, tau) or tau > t[-1] * (1 + 1e-12):
        raise ContractViolation(f"series covers [{t[0]}, {t[-1]}], not [0, {tau}]")
    keep = t < tau
    tt = np.append(t[keep], tau)
    vv = np.append(V[keep], np.interp(tau, t, V))
    return float(np.trapezoid(vv, tt) / tau)


@dataclass
class ProductSample:
    value: float
    trusted: bool


def product_functional(T, buffer_cells=4, tol=0.01):
    """(int T(1 - T)) * (int |grad T|^2) over the strip.

    Samples whose first/last ``buffer_cells`` columns miss the far-field
    limits 1 and 0 by more than ``tol`` are flagged untrusted.
    """
    d = T.domain
    v = T.values
    hx, hy = d.spacing
    gx = np.gradient(v, hx, axis=0, edge_order=2)
    gy = np.gradient(v, hy, axis=1, edge_order=2) if v.shape[1] > 2 else np.zeros_like(v)
    a = float(np.sum(v * (1 - v)) * hx * hy)
    b = float(np.sum(gx**2 + gy**2) * hx * hy)
    trusted = bool(
        np.all(np.abs(v[:buffer_cells] - 1) <= tol) and np.all(np.abs(v[-buffer_cells:]) <= tol)
    )
    return ProductSample(a * b, trusted)


def thm3_bound(v0, kappa, t, C=1.0):
    """C v0 (1 - exp(-v0^2 t / (2 kappa)))."""
    if v0 <= 0 or kappa <= 0 or np.any(np.asarray(t) < 0):
        raise ParameterError("need v0 > 0, kappa > 0, t >= 0")
    return C * v0 * (-np.expm1(-(v0**2) * t / (2 * kappa)))


# --- shear partitions -----------------------------------------------------------


@dataclass
class Partition:
    """Sign-coherent intervals [lo, hi] of a shear profile on [0, 1]."""

    bounds: list
    signs: list

    @property
    def centres(self):
        return np.array([(a + b) / 2 for a, b in self.bounds])

    @property
    def halfwidths(self):
        return np.array([(b - a) / 2 for a, b in self.bounds])

    def plus(self):
        return [i for i, s in enumerate(self.signs) if s > 0]

    def minus(self):
        return [i for i, s in enumerate(self.signs) if s < 0]


def _cell_centres(n):
    return (np.arange(n) + 0.5) / n


def compute_partition(u, y=None):
    """Maximal sign-coherent intervals of sampled u(y).

    Strict sign changes between samples are located by linear interpolation;
    a run of exactly-zero samples splits at its midpoint.
    """
    u = np.asarray(u, dtype=float)
    y = _cell_centres(u.size) if y is None else np.asarray(y, dtype=float)
    scale = np.abs(u).max()
    if scale == 0:
        raise ContractViolation("degenerate profile, bound vacuous")
    mean = np.trapezoid(u, y) if y[0] == 0 and y[-1] == 1 else u.mean()
    if abs(mean) > 1e-8 * max(1.0, scale):
        raise ContractViolation(f"shear profile is not mean-zero (mean {mean:.3g})")
    sgn = np.sign(u)
    cuts = []
    signs = []
    current = None
    i = 0
    n = u.size
    while i < n:
        if sgn[i] == 0:
            j = i
            while j < n and sgn[j] == 0:
                j += 1
            if current is not None and j < n and sgn[j] != current:
                cuts.append(0.5 * (y[i] + y[j - 1]))
                signs.append(current)
                current = None
            i = j
            continue
        if current is None:
            current = sgn[i]
        elif sgn[i] != current:
            a, b = u[i - 1], u[i]
            cuts.append(y[i - 1] + (y[i] - y[i - 1]) * a / (a - b))
            signs.append(current)
            current = sgn[i]
        i += 1
    signs.append(current)
    edges = [0.0] + cuts + [1.0]
    return Partition([(edges[k], edges[k + 1]) for k in range(len(signs))], [int(s) for s in signs])


def _profile_callable(u_profile):
    if callable(u_profile):
        return u_profile, None
    u = np.asarray(u_profile, dtype=float)
    y = _cell_centres(u.size)
    h = 1.0 / u.size
    return (lambda s: np.interp(s, y, u)), h


def thm4_bound(partition, u_profile, kappa, v0, c_plus=1.0, c_minus=1.0, nquad=201):
    """Shear-flow lower bound on the averaged burning rate, and its validity time tau0.

    Returns ``(bound, tau0)`` with tau0 = max(kappa / v0^2, H / v0), H = 1.
    """
    ell = kappa / v0
    f, h_grid = _profile_callable(u_profile)
    h = partition.halfwidths
    c = partition.centres
    weight = h**3 / (h**2 + ell**2)
    total = weight.sum()
    plus, minus = partition.plus(), partition.minus()
    cp = weight[minus].sum() / total
    cm = weight[plus].sum() / total

    def middle_integral(j):
        if h_grid is not None and 2 * h[j] < 2 * h_grid:
            return 0.0
        s = np.linspace(c[j] - h[j] / 2, c[j] + h[j] / 2, nquad)
        return simpson(np.abs(f(s)), x=s)

    def side(ids):
        return sum(middle_integral(j) / (1 + ell**2 / h[j] ** 2) for j in ids)

    bound = c_plus * cp * side(plus) + c_minus * cm * side(minus)
    tau0 = max(kappa / v0**2, 1.0 / v0)
    return float(bound), float(tau0)


def c_plus_minus(partition, kappa, v0):
    ell = kappa / v0
    h = partition.halfwidths
    weight = h**3 / (h**2 + ell**2)
    total = weight.sum()
    return weight[partition.minus()].sum() / total, weight[partition.plus()].sum() / total


# --- trajectories -------------------------------------------------------------


@dataclass
class FrontRun:
    t: np.ndarray
    V: np.ndarray
    product: np.ndarray
    trusted: np.ndarray
    state: FrontState


def run_front(state, t_end, dt=None, sample_every=1, dt_fraction=1.0, solver=None, shift=True):
    """Integrate to ``t_end`` recording V(t) and the product functional."""
    d = state.T.domain
    solver = solver or KPPSolver(d, state.kappa, state.v0)
    uf, vf = solver.face_velocities(state.flow, state.t, state.offset)
    if dt is None:
        dt = dt_fraction * solver.max_dt(uf, vf)
    nsteps = int(np.ceil((t_end - state.t) / dt - 1e-9))
    dt = (t_end - state.t) / nsteps
    ts, Vs, Ps, Tr = [], [], [], []

    def record(s):
        ts.append(s.t)
        Vs.append(bulk_burning_rate(s, kpp_rhs(s, solver)))
        p = product_functional(s.T)
        Ps.append(p.value)
        Tr.append(p.trusted)

    record(state)
    for i in range(nsteps):
        state = step_kpp(state, dt, solver, shift=shift)
        if (i + 1) % sample_every == 0 or i == nsteps - 1:
            record(state)
    return FrontRun(np.array(ts), np.array(Vs), np.array(Ps), np.array(Tr), state)
