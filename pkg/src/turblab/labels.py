"""Euler equations in active-vector form.

The back-to-labels map is A(x, t) = x + delta(x, t) with delta periodic.  The
velocity is reconstructed from the initial velocity u0 and the map as

    u_A = P[(grad A)^T u0(A)],

and A is transported by u_A.  u0 is band-limited, so u0(A(x)) is evaluated
exactly by summing its Fourier series at the mapped points.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ContractViolation, SolverAbort
from .fields import PeriodicBox, ScalarField, VectorField, dealias_mask, partial
from .flow import _rfft_wavenumbers
from .integrators import check_cfl, rk4_step

DISTORTION_LIMIT = 2.0


@dataclass
class LabelMap:
    """delta on a periodic box, plus the initial velocity it was started from."""

    delta: VectorField
    u0: VectorField
    t: float = 0.0

    @classmethod
    def identity(cls, u0):
        return cls(VectorField(u0.domain, np.zeros_like(u0.values)), u0)

    @property
    def domain(self):
        return self.delta.domain

    def labels(self):
        """A(x) = x + delta(x) sampled on the grid (not periodic)."""
        return np.stack(self.domain.mesh()) + self.delta.values

    def grad_delta(self):
        d = self.domain
        return np.stack([np.stack([partial(c, d, j) for j in range(d.dim)]) for c in self.delta.values])

    @property
    def distortion(self):
        g = self.grad_delta()
        return float(np.sqrt(np.sum(g**2, axis=(0, 1))).max())

    @property
    def under_resolved(self):
        return self.distortion > DISTORTION_LIMIT


class FourierComposer:
    """Evaluates a band-limited periodic field at arbitrary points."""

    def __init__(self, u0, tol=1e-13):
        box = u0.domain
        axes = tuple(range(1, box.dim + 1))
        c = np.fft.fftn(u0.values, axes=axes, norm="forward")
        amp = np.sqrt(np.sum(np.abs(c) ** 2, axis=0))
        keep = amp > tol * max(amp.max(), 1e-300)
        idx = np.nonzero(keep)
        for ax, n in enumerate(box.n):
            if np.any(idx[ax] == n // 2):
                raise ContractViolation("u0 carries Nyquist content; it is not band-limited on this grid")
        ks = [2 * np.pi / box.side * np.fft.fftfreq(n, 1.0 / n) for n in box.n]
        self.k = np.stack([ks[ax][i] for ax, i in enumerate(idx)], axis=1)
        self.c = c[(slice(None),) + idx].T
        self.box = box

    def __call__(self, points, chunk=64):
        """points has shape (dim, ...); returns values of shape (ncomp, ...)."""
        flat = points.reshape(points.shape[0], -1)
        out = np.zeros((self.c.shape[1], flat.shape[1]))
        for i in range(0, len(self.k), chunk):
            phase = np.exp(1j * (self.k[i : i + chunk] @ flat))
            out += (self.c[i : i + chunk].T @ phase).real
        return out.reshape((self.c.shape[1],) + points.shape[1:])


class CubicComposer:
    """Periodic tricubic-spline interpolation of u0; faster, not exact."""

    def __init__(self, u0):
        self.u0 = u0
        self.box = u0.domain

    def __call__(self, points):
        h = np.asarray(self.box.spacing).reshape((-1,) + (1,) * (points.ndim - 1))
        idx = points / h
        return np.stack(
            [ndimage.map_coordinates(c, idx, order=3, mode="grid-wrap") for c in self.u0.values]
        )


class ActiveVectorEuler:
    """Velocity reconstruction and label transport on a periodic box."""

    def __init__(self, u0, composition="fourier"):
        box = u0.domain
        if not isinstance(box, PeriodicBox):
            raise ContractViolation("active-vector Euler is set on a PeriodicBox")
        self.box = box
        self.u0 = u0
        self.compose = FourierComposer(u0) if composition == "fourier" else CubicComposer(u0)
        self.k = _rfft_wavenumbers(box)
        kk = sum(k * k for k in self.k)
        self.inv_k2 = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
        self.mask = dealias_mask(box)
        self.axes = tuple(range(-box.dim, 0))

    def fft(self, v):
        return np.fft.rfftn(v, axes=self.axes)

    def ifft(self, vh):
        return np.fft.irfftn(vh, s=self.box.n, axes=self.axes)

    def grad(self, vh):
        """g[m, i] = d_i of component m, from rfft coefficients."""
        return np.stack([np.stack([self.ifft(1j * k * c) for k in self.k]) for c in vh])

    def pullback(self, delta):
        """(grad A)^T u0(A) on the grid, plus grad delta."""
        dh = self.fft(delta)
        gd = self.grad(dh)
        A = np.stack(self.box.mesh()) + delta
        u0A = self.compose(A)
        v = u0A + np.einsum("m...,mi...->i...", u0A, gd)
        return v, gd

    def velocity(self, delta):
        v, _ = self.pullback(delta)
        vh = self.fft(v)
        kdot = sum(k * c for k, c in zip(self.k, vh)) * self.inv_k2
        return self.ifft(np.stack([c - k * kdot for k, c in zip(self.k, vh)]))

    def velocity_and_pressure(self, delta):
        """u = v - grad n with lap n = div v and mean(n) = 0."""
        v, _ = self.pullback(delta)
        vh = self.fft(v)
        div = sum(1j * k * c for k, c in zip(self.k, vh))
        nh = -div * self.inv_k2
        u = self.ifft(np.stack([c - 1j * k * nh for k, c in zip(self.k, vh)]))
        return u, self.ifft(nh)

    def rhs(self, delta):
        u = self.velocity(delta)
        gd = self.grad(self.fft(delta))
        adv = np.einsum("j...,mj...->m...", u, gd)
        adv = self.ifft(self.fft(adv) * self.mask)
        return -u - adv

    def step(self, delta, dt, check=True):
        if check:
            u = self.velocity(delta)
            check_cfl(dt, np.abs(u).max(), self.box.spacing)
        out = rk4_step(delta, self.rhs, dt)
        if not np.all(np.isfinite(out)):
            raise SolverAbort("non-finite label displacement")
        return out


def velocity_from_labels(lmap, composition="fourier"):
    """u_A = P[(grad A)^T u0(A)]."""
    solver = ActiveVectorEuler(lmap.u0, composition)
    return VectorField(lmap.domain, solver.velocity(lmap.delta.values))


def reconstruct_with_pressure(lmap, composition="fourier"):
    """u_A = (grad A)^T u0(A) - grad n_A; returns (u_A, n_A) with n_A of zero mean."""
    solver = ActiveVectorEuler(lmap.u0, composition)
    u, n = solver.velocity_and_pressure(lmap.delta.values)
    return VectorField(lmap.domain, u), ScalarField(lmap.domain, n)


def step_labels(lmap, dt, solver=None):
    """RK4 step of d delta/dt + u_A . grad delta = -u_A."""
    solver = solver or ActiveVectorEuler(lmap.u0)
    out = solver.step(lmap.delta.values, dt)
    return replace(lmap, delta=VectorField(lmap.domain, out), t=lmap.t + dt)


# --- diagnostics --------------------------------------------------------------


@dataclass
class StretchDiagnostics:
    sup_grad_A_sq: float
    integral: float
    det_min: float
    det_max: float
    distortion: float
    under_resolved: bool
    alpha_residual: float = None


@dataclass
class LabelHistory:
    t: list = field(default_factory=list)
    sup_grad_A_sq: list = field(default_factory=list)


def jacobian_range(lmap):
    g = lmap.grad_delta()
    dim = lmap.domain.dim
    J = g + np.eye(dim).reshape((dim, dim) + (1,) * dim)
    det = np.linalg.det(np.moveaxis(J, (0, 1), (-2, -1)))
    return float(det.min()), float(det.max())


def label_diagnostics(lmap, history=None):
    """sup_x |grad A|^2 (Frobenius) and its trapezoid time integral."""
    g = lmap.grad_delta()
    dim = lmap.domain.dim
    J = g + np.eye(dim).reshape((dim, dim) + (1,) * dim)
    sup = float(np.sum(J**2, axis=(0, 1)).max())
    if history is None:
        history = LabelHistory()
    history.t.append(lmap.t)
    history.sup_grad_A_sq.append(sup)
    ts = np.asarray(history.t)
    integral = float(np.trapezoid(history.sup_grad_A_sq, ts)) if len(ts) > 1 else 0.0
    dmin, dmax = jacobian_range(lmap)
    dist = float(np.sqrt(np.sum(g**2, axis=(0, 1))).max())
    return StretchDiagnostics(sup, integral, dmin, dmax, dist, dist > DISTORTION_LIMIT)


def _derivative_fn(u, spacing):
    if isinstance(u, VectorField):
        d = u.domain
        return (lambda a, j: partial(a, d, j)), u.values
    if spacing is None:
        raise ContractViolation("raw arrays need grid spacing")
    return (lambda a, j: np.gradient(a, spacing[j], axis=j, edge_order=2)), np.asarray(u)


def alpha_stretching_residual(u, omega_history, dt, spacing=None, mask_fraction=1e-6):
    """Relative L2 residual of D_t|omega| = alpha |omega| with alpha = xi.(grad u) xi.

    ``omega_history`` holds two or three vorticity snapshots spaced by ``dt``;
    ``u`` is the velocity at the centre of that window (the midpoint for two
    snapshots, the middle snapshot for three).  D_t|omega| is evaluated as
    xi . (d_t omega + u . grad omega) with the time derivative differenced
    across the window.  The residual is normalised by the L2 norm of
    |grad u| |omega| over the mask |omega| > mask_fraction * max|omega|; an
    all-zero vorticity gives 0.  2D (scalar) vorticity has alpha = 0.
    Fields may be VectorFields or raw arrays with ``spacing`` (finite
    differences, for non-periodic test fields).
    """
    deriv, uv = _derivative_fn(u, spacing)
    snaps = [w.values if hasattr(w, "values") else np.asarray(w) for w in omega_history]
    if len(snaps) not in (2, 3):
        raise ContractViolation("need two or three vorticity snapshots")
    dim = uv.shape[0]
    planar = snaps[0].ndim == uv.ndim - 1
    wc = snaps[1] if len(snaps) == 3 else 0.5 * (snaps[0] + snaps[1])
    dwdt = (snaps[-1] - snaps[0]) / (dt * (len(snaps) - 1))
    if planar:
        wc, dwdt = wc[None], dwdt[None]
    mag = np.sqrt(np.sum(wc**2, axis=0))
    if mag.max() == 0:
        return 0.0
    mask = mag > mask_fraction * mag.max()
    grad_u = np.stack([np.stack([deriv(c, j) for j in range(dim)]) for c in uv])
    adv = np.stack([sum(uv[j] * deriv(c, j) for j in range(dim)) for c in wc])
    xi = np.where(mask, wc / np.where(mask, mag, 1.0), 0.0)
    dt_mag = np.sum(xi * (dwdt + adv), axis=0)
    if planar:
        alpha = np.zeros_like(mag)
    else:
        alpha = np.einsum("i...,ij...,j...->...", xi, grad_u, xi)
    res = (dt_mag - alpha * mag)[mask]
    scale = (np.sqrt(np.sum(grad_u**2, axis=(0, 1))) * mag)[mask]
    denom = np.sqrt(np.sum(scale**2))
    if denom == 0:
        return 0.0 if np.all(res == 0) else float("inf")
    return float(np.sqrt(np.sum(res**2)) / denom)
