"""Pseudo-spectral Navier-Stokes / Euler integrators on periodic boxes and
the regularity and dissipation diagnostics computed from their output.

Quadratic terms are dealiased with the 2/3 rule.  The 2D solver evolves
vorticity, the 3D solver evolves velocity in rotational form with the Leray
projector applied to the nonlinear term at every stage.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ContractViolation, ParameterError, SolverAbort
from .fields import PeriodicBox, ScalarField, VectorField, dealias_mask, partial
from .integrators import DiagonalOperator, check_cfl, imex_step, rk4_step

OSC_SAMPLE_LIMIT = 4096


def _rfft_wavenumbers(box):
    """Angular wavenumbers in rfftn layout, Nyquist zeroed."""
    ks = []
    for ax, n in enumerate(box.n):
        if ax == box.dim - 1:
            k = np.fft.rfftfreq(n, 1.0 / n)
        else:
            k = np.fft.fftfreq(n, 1.0 / n)
        k = k * 2 * np.pi / box.side
        k[np.abs(np.abs(k) * box.side / (2 * np.pi) - n / 2) < 0.5] = 0.0
        shape = [1] * box.dim
        shape[ax] = k.size
        ks.append(k.reshape(shape))
    return ks


def _rfft_k2(box):
    """|k|^2 including Nyquist entries (used for the viscous term)."""
    ks = []
    for ax, n in enumerate(box.n):
        k = np.fft.rfftfreq(n, 1.0 / n) if ax == box.dim - 1 else np.fft.fftfreq(n, 1.0 / n)
        shape = [1] * box.dim
        shape[ax] = k.size
        ks.append((k * 2 * np.pi / box.side).reshape(shape))
    return sum(k * k for k in ks)


def band_forcing(box, k_lo, k_hi, amplitude, seed=0, ncomp=None):
    """Frozen deterministic forcing supported on k_lo <= |k| <= k_hi.

    Random phases are drawn once from ``seed``; the result is normalised to
    root-mean-square ``amplitude``.  For ``ncomp=3`` a solenoidal vector
    forcing is returned, otherwise a scalar (vorticity) forcing.
    """
    rng = np.random.default_rng(seed)
    ks = box.wavenumbers()
    kmag = np.sqrt(sum(k * k for k in ks))
    band = (kmag >= k_lo) & (kmag <= k_hi)
    shape = box.shape if ncomp is None else (ncomp,) + box.shape
    coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * band
    axes = tuple(range(-box.dim, 0))
    if ncomp is not None:
        from .fields import project_hat

        coef = project_hat(coef, box.wavenumbers(nyquist=False))
    vals = np.fft.ifftn(coef, axes=axes).real
    # the real part keeps the Hermitian-symmetric half, so support is unchanged
    rms = np.sqrt(np.mean(vals**2) * (1 if ncomp is None else ncomp))
    if rms == 0:
        raise ParameterError(f"no wavenumbers in forcing band [{k_lo}, {k_hi}]")
    vals *= amplitude / rms
    if ncomp is None:
        vals -= vals.mean()
        return ScalarField(box, vals)
    return VectorField(box, vals)


# --- 2D vorticity form ---------------------------------------------------------


@dataclass
class NSState2D:
    omega: ScalarField
    nu: float
    forcing: ScalarField = None
    t: float = 0.0

    def __post_init__(self):
        if not isinstance(self.omega.domain, PeriodicBox) or self.omega.domain.dim != 2:
            raise ContractViolation("NSState2D lives on a 2D PeriodicBox")
        if abs(self.omega.values.mean()) > 1e-10 * max(1.0, np.abs(self.omega.values).max()):
            raise ContractViolation("vorticity must have zero mean")


class NSE2D:
    """Dealiased vorticity solver; ``scheme`` is 'rk4' or 'imex3'."""

    def __init__(self, box, nu, forcing=None, scheme="rk4"):
        if nu < 0:
            raise ParameterError("viscosity must be nonnegative")
        self.box = box
        self.nu = nu
        self.scheme = scheme
        self.kx, self.ky = _rfft_wavenumbers(box)
        self.k2 = _rfft_k2(box)
        kk = self.kx**2 + self.ky**2
        self.inv_k2 = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
        self.mask = dealias_mask(box)
        self.fhat = None if forcing is None else np.fft.rfft2(forcing.values)
        self.visc = DiagonalOperator(-nu * self.k2)

    def velocity_hat(self, wh):
        psi = wh * self.inv_k2
        return 1j * self.ky * psi, -1j * self.kx * psi

    def velocity(self, wh):
        uh, vh = self.velocity_hat(wh)
        n = self.box.n
        return np.stack([np.fft.irfft2(uh, s=n), np.fft.irfft2(vh, s=n)])

    def explicit(self, wh):
        n = self.box.n
        uh, vh = self.velocity_hat(wh)
        u = np.fft.irfft2(uh, s=n)
        v = np.fft.irfft2(vh, s=n)
        wx = np.fft.irfft2(1j * self.kx * wh, s=n)
        wy = np.fft.irfft2(1j * self.ky * wh, s=n)
        out = -np.fft.rfft2(u * wx + v * wy) * self.mask
        if self.fhat is not None:
            out = out + self.fhat
        return out

    def full_rhs(self, wh):
        return self.explicit(wh) - self.nu * self.k2 * wh

    def step_hat(self, wh, dt, check=True):
        if check:
            u = self.velocity(wh)
            check_cfl(dt, np.abs(u).max(), self.box.spacing)
        if self.scheme == "rk4":
            out = rk4_step(wh, self.full_rhs, dt)
        else:
            out = imex_step(wh, self.explicit, self.visc, dt, self.scheme)
        out[0, 0] = 0.0
        if not np.all(np.isfinite(out)):
            raise SolverAbort("non-finite vorticity")
        return out


def step_nse2d(state, dt, scheme="rk4"):
    solver = NSE2D(state.omega.domain, state.nu, state.forcing, scheme)
    wh = solver.step_hat(np.fft.rfft2(state.omega.values), dt)
    om = ScalarField(state.omega.domain, np.fft.irfft2(wh, s=state.omega.domain.n))
    return replace(state, omega=om, t=state.t + dt)


def velocity_from_vorticity(omega):
    solver = NSE2D(omega.domain, 0.0)
    return VectorField(omega.domain, solver.velocity(np.fft.rfft2(omega.values)))


# --- 3D velocity form ---------------------------------------------------------


@dataclass
class NSState3D:
    u: VectorField
    nu: float
    forcing: VectorField = None
    t: float = 0.0

    def __post_init__(self):
        if not isinstance(self.u.domain, PeriodicBox) or self.u.domain.dim != 3:
            raise ContractViolation("NSState3D lives on a 3D PeriodicBox")


class NSE3D:
    """Dealiased rotational-form solver for u on a 3D periodic box."""

    def __init__(self, box, nu, forcing=None, scheme="rk4"):
        if nu < 0:
            raise ParameterError("viscosity must be nonnegative")
        self.box = box
        self.nu = nu
        self.scheme = scheme
        self.k = _rfft_wavenumbers(box)
        self.k2 = _rfft_k2(box)
        kk = sum(k * k for k in self.k)
        self.inv_k2 = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
        self.mask = dealias_mask(box)
        self.fhat = None
        if forcing is not None:
            self.fhat = self.project(self.fft(forcing.values))
        self.visc = DiagonalOperator(-nu * self.k2)

    def fft(self, v):
        return np.fft.rfftn(v, axes=(-3, -2, -1))

    def ifft(self, vh):
        return np.fft.irfftn(vh, s=self.box.n, axes=(-3, -2, -1))

    def project(self, vh):
        kx, ky, kz = self.k
        kdot = (kx * vh[0] + ky * vh[1] + kz * vh[2]) * self.inv_k2
        return np.stack([vh[0] - kx * kdot, vh[1] - ky * kdot, vh[2] - kz * kdot])

    def curl_hat(self, uh):
        kx, ky, kz = self.k
        return 1j * np.stack(
            [ky * uh[2] - kz * uh[1], kz * uh[0] - kx * uh[2], kx * uh[1] - ky * uh[0]]
        )

    def explicit(self, uh):
        u = self.ifft(uh)
        w = self.ifft(self.curl_hat(uh))
        cross = np.stack(
            [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]]
        )
        out = self.project(self.fft(cross) * self.mask)
        if self.fhat is not None:
            out = out + self.fhat
        return out

    def full_rhs(self, uh):
        return self.explicit(uh) - self.nu * self.k2 * uh

    def step_hat(self, uh, dt, check=True):
        if check:
            check_cfl(dt, np.abs(self.ifft(uh)).max(), self.box.spacing)
        if self.scheme == "rk4":
            out = rk4_step(uh, self.full_rhs, dt)
        else:
            out = imex_step(uh, self.explicit, self.visc, dt, self.scheme)
        if not np.all(np.isfinite(out)):
            raise SolverAbort("non-finite velocity")
        return out

    def resolution_fraction(self, uh):
        """Energy fraction beyond 2/3 of the dealiased wavenumber cutoff."""
        kmag = np.sqrt(sum(k * k for k in self.k)) * self.box.side / (2 * np.pi)
        kcut = min(self.box.n) / 3.0
        e = np.sum(np.abs(uh) ** 2, axis=0)
        e[..., 1:] *= 2
        total = e.sum()
        return 0.0 if total == 0 else float(e[kmag > 2.0 / 3.0 * kcut].sum() / total)


def step_nse3d(state, dt, scheme="rk4"):
    solver = NSE3D(state.u.domain, state.nu, state.forcing, scheme)
    uh = solver.step_hat(solver.project(solver.fft(state.u.values)), dt)
    return replace(state, u=VectorField(state.u.domain, solver.ifft(uh)), t=state.t + dt)


@dataclass
class EulerStepResult:
    u: VectorField
    under_resolved: bool
    tail_fraction: float


def step_euler_classical(u, dt):
    """RK4 step of the projected Euler equations with a resolution monitor."""
    solver = NSE3D(u.domain, 0.0)
    uh = solver.step_hat(solver.project(solver.fft(u.values)), dt)
    frac = solver.resolution_fraction(uh)
    return EulerStepResult(VectorField(u.domain, solver.ifft(uh)), frac > 0.01, frac)


def taylor_green(box, amplitude=1.0):
    x, y, z = box.mesh()
    s = 2 * np.pi / box.side
    u = np.stack(
        [
            np.sin(s * x) * np.cos(s * y) * np.cos(s * z),
            -np.cos(s * x) * np.sin(s * y) * np.cos(s * z),
            np.zeros_like(x),
        ]
    )
    return VectorField(box, amplitude * u)


# --- diagnostics --------------------------------------------------------------


def _point_cloud_diameter(pts):
    n = len(pts)
    if n < 2:
        return 0.0
    best = 0.0
    # chunked all-pairs to bound memory
    for i in range(0, n, 512):
        d = pts[i : i + 512, None, :] - pts[None, :, :]
        best = max(best, float(np.sqrt(np.max(np.sum(d * d, axis=-1)))))
    return best


def _hull_vertices(pts):
    centred = pts - pts.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300)))
    if rank == 0:
        return pts[:1]
    if rank == 1:
        proj = centred @ vt[0]
        return pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
    reduced = centred @ vt[:rank].T
    try:
        hull = ConvexHull(reduced)
    except QhullError:
        return pts
    return pts[hull.vertices]


def oscillation(u):
    """sup over x, r of |u(x + r) - u(x)|: the diameter of the set of velocity values.

    Up to 4096 samples are compared all-pairs.  Larger grids are first
    reduced to the vertices of the convex hull of the velocity values (the
    diameter is attained there); if the hull is still larger than 4096 points a
    deterministic strided subsample of it gives a lower bound.
    """
    pts = u.values.reshape(u.ncomp, -1).T
    if len(pts) > OSC_SAMPLE_LIMIT:
        pts = _hull_vertices(pts)
        if len(pts) > OSC_SAMPLE_LIMIT:
            stride = int(np.ceil(len(pts) / OSC_SAMPLE_LIMIT))
            pts = pts[::stride]
    return _point_cloud_diameter(pts)


def grad_frobenius_max(u):
    d = u.domain
    g2 = sum(partial(c, d, j) ** 2 for c in u.values for j in range(d.dim))
    return float(np.sqrt(g2.max()))


@dataclass
class FlowHistory:
    t: list = field(default_factory=list)
    grad_max: list = field(default_factory=list)
    omega_max: list = field(default_factory=list)
    osc: list = field(default_factory=list)


@dataclass
class FlowDiagnostics:
    eps: float
    eta: float
    grad_max: float
    tau_inv: float
    osc: float
    bkm: float
    osc2_integral: float


def _running_mean(t, v):
    if len(t) < 2:
        return float(v[-1])
    return float(np.trapezoid(v, t) / (t[-1] - t[0]))


def _integral(t, v):
    return float(np.trapezoid(v, t)) if len(t) > 1 else 0.0


def flow_diagnostics(u, omega, nu, history=None, t=None):
    """Dissipation rates and regularity monitors.

    eps = nu <|grad u|^2>, eta = nu <|grad omega|^2> (space means).  When
    ``history`` and ``t`` are given the snapshot is appended and tau_inv (the
    running time mean of max|grad u|), bkm (time integral of max|omega|) and the
    time integral of osc^2 are trapezoid integrals over the stored history.
    """
    d = u.domain
    if omega.domain != d:
        raise ContractViolation("u and omega must share a domain")
    g2 = sum(partial(c, d, j) ** 2 for c in u.values for j in range(d.dim))
    wv = omega.values if isinstance(omega, VectorField) else omega.values[None]
    w2 = sum(partial(c, d, j) ** 2 for c in wv for j in range(d.dim))
    eps = nu * float(g2.mean())
    eta = nu * float(w2.mean())
    gmax = float(np.sqrt(g2.max()))
    wmax = float(np.sqrt(np.sum(wv**2, axis=0)).max())
    osc = oscillation(u)
    if history is None:
        history = FlowHistory()
        t = 0.0 if t is None else t
    if t is not None:
        history.t.append(float(t))
        history.grad_max.append(gmax)
        history.omega_max.append(wmax)
        history.osc.append(osc)
    ts = np.asarray(history.t)
    return FlowDiagnostics(
        eps=eps,
        eta=eta,
        grad_max=gmax,
        tau_inv=_running_mean(ts, np.asarray(history.grad_max)),
        osc=osc,
        bkm=_integral(ts, np.asarray(history.omega_max)),
        osc2_integral=_integral(ts, np.asarray(history.osc) ** 2),
    )


def energy(u):
    return 0.5 * float(np.mean(np.sum(u.values**2, axis=0)))


def enstrophy(omega):
    v = omega.values if isinstance(omega, VectorField) else omega.values[None]
    return 0.5 * float(np.mean(np.sum(v**2, axis=0)))
