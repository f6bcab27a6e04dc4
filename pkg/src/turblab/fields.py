"""Grids, sampled fields, spectral transforms and discrete calculus.

Periodic axes are differentiated spectrally.  Wall-bounded or truncated
axes use second-order centred differences with one-sided second-order
closures at the two ends.  Everything is float64.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ContractViolation, ParameterError


def _as_tuple(n, dim):
    if np.isscalar(n):
        return (int(n),) * dim
    n = tuple(int(v) for v in n)
    if len(n) != dim:
        raise ParameterError(f"expected {dim} resolutions, got {len(n)}")
    return n


@dataclass(frozen=True)
class PeriodicBox:
    """The torus [0, side)^dim sampled at n points per axis."""

    dim: int = 2
    n: tuple = 64
    side: float = 2 * np.pi

    kind_tag = 1

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {self.dim}")
        n = _as_tuple(self.n, self.dim)
        if any(v < 8 or v % 2 for v in n):
            raise ParameterError(f"grid points per axis must be even and >= 8, got {n}")
        if not self.side > 0:
            raise ParameterError("side must be positive")
        object.__setattr__(self, "n", n)

    @property
    def shape(self):
        return self.n

    @property
    def periodic(self):
        return (True,) * self.dim

    @property
    def spacing(self):
        return tuple(self.side / v for v in self.n)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return self.side**self.dim

    def coords(self):
        return [np.arange(v) * self.side / v for v in self.n]

    def mesh(self):
        return np.meshgrid(*self.coords(), indexing="ij")

    def wavenumbers(self, nyquist=True):
        """Angular wavenumbers per axis, broadcastable against the grid.

        With ``nyquist=False`` the Nyquist entry is set to zero, which is the
        convention for odd-order derivatives and the projector.
        """
        ks = []
        for ax, v in enumerate(self.n):
            k = 2 * np.pi / self.side * np.fft.fftfreq(v, 1.0 / v)
            if not nyquist:
                k[v // 2] = 0.0
            shape = [1] * self.dim
            shape[ax] = v
            ks.append(k.reshape(shape))
        return ks

    def params(self):
        return (float(self.dim), float(self.side))


@dataclass(frozen=True)
class StripDomain:
    """Truncated strip [-X, X] x [0, H], cell-centred in both directions.

    Boundary tags are fixed: Neumann at y = 0 and y = H, Dirichlet T = 1 at
    x = -X and T = 0 at x = +X.
    """

    X: float = 20.0
    nx: int = 1024
    ny: int = 32
    height: float = 1.0

    kind_tag = 2
    dim = 2
    bc = {"x-": ("dirichlet", 1.0), "x+": ("dirichlet", 0.0), "y": ("neumann", 0.0)}

    def __post_init__(self):
        if self.height != 1.0:
            raise ParameterError("strip height is fixed to 1")
        if not self.X > 0:
            raise ParameterError("X must be positive")
        if self.nx < 4 or self.ny < 1:
            raise ParameterError("strip needs nx >= 4 and ny >= 1")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def periodic(self):
        return (False, False)

    @property
    def spacing(self):
        return (2 * self.X / self.nx, self.height / self.ny)

    @property
    def cell_volume(self):
        hx, hy = self.spacing
        return hx * hy

    @property
    def volume(self):
        return 2 * self.X * self.height

    def coords(self):
        hx, hy = self.spacing
        x = -self.X + (np.arange(self.nx) + 0.5) * hx
        y = (np.arange(self.ny) + 0.5) * hy
        return [x, y]

    def mesh(self):
        return np.meshgrid(*self.coords(), indexing="ij")

    def params(self):
        return (float(self.X), float(self.height))


@dataclass(frozen=True)
class ChannelDomain:
    """Horizontally periodic layer 0 <= z <= 1 with walls at z = 0 and z = 1.

    ``nz`` counts cells; the vertical grid has ``nz + 1`` nodes including both
    walls.  With ``ny = None`` the domain is the 2D x-z slice.
    """

    L: float = 2.0
    nx: int = 128
    nz: int = 64
    ny: int = None
    Ly: float = None

    kind_tag = 3
    bc = {"velocity": "no-slip", "T(z=0)": 1.0, "T(z=1)": 0.0}

    def __post_init__(self):
        if not self.L > 0:
            raise ParameterError("horizontal period must be positive")
        if self.nx < 4 or self.nx % 2:
            raise ParameterError("nx must be even and >= 4")
        if self.nz < 4:
            raise ParameterError("nz must be >= 4")
        if self.ny is not None and self.Ly is None:
            object.__setattr__(self, "Ly", self.L)

    @property
    def dim(self):
        return 2 if self.ny is None else 3

    @property
    def shape(self):
        if self.ny is None:
            return (self.nx, self.nz + 1)
        return (self.nx, self.ny, self.nz + 1)

    @property
    def periodic(self):
        return (True,) * (self.dim - 1) + (False,)

    @property
    def spacing(self):
        if self.ny is None:
            return (self.L / self.nx, 1.0 / self.nz)
        return (self.L / self.nx, self.Ly / self.ny, 1.0 / self.nz)

    @property
    def volume(self):
        return self.L * (1.0 if self.ny is None else self.Ly)

    def coords(self):
        out = [np.arange(self.nx) * self.L / self.nx]
        if self.ny is not None:
            out.append(np.arange(self.ny) * self.Ly / self.ny)
        out.append(np.linspace(0.0, 1.0, self.nz + 1))
        return out

    def mesh(self):
        return np.meshgrid(*self.coords(), indexing="ij")

    def z_weights(self):
        """Trapezoid weights on the vertical nodes."""
        w = np.full(self.nz + 1, 1.0 / self.nz)
        w[0] = w[-1] = 0.5 / self.nz
        return w

    def params(self):
        return (float(self.dim), float(self.L), float(self.Ly or 0.0))


DOMAIN_KINDS = {1: PeriodicBox, 2: StripDomain, 3: ChannelDomain}


@dataclass
class ScalarField:
    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != tuple(self.domain.shape):
            raise ContractViolation(
                f"scalar field shape {self.values.shape} does not match domain {self.domain.shape}"
            )

    def copy(self):
        return ScalarField(self.domain, self.values.copy())


@dataclass
class VectorField:
    """Vector field; ``values`` has the component axis first."""

    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[1:] != tuple(self.domain.shape):
            raise ContractViolation(
                f"vector field shape {self.values.shape} does not match domain {self.domain.shape}"
            )

    @property
    def ncomp(self):
        return self.values.shape[0]

    def copy(self):
        return VectorField(self.domain, self.values.copy())


@dataclass
class SpectralCoeffs:
    """Complex Fourier coefficients c_k with f(x) = sum_k c_k exp(i k.x).

    The full (Hermitian-symmetric) array in numpy FFT ordering is stored for
    the transformed axes.
    """

    domain: object
    coeffs: np.ndarray
    axes: tuple = field(default=None)


def _periodic_axes(domain, axes):
    if axes is None:
        axes = tuple(range(domain.dim))
    axes = tuple(axes)
    bad = [a for a in axes if not domain.periodic[a]]
    if bad:
        raise ContractViolation(f"axes {bad} are not periodic on {type(domain).__name__}")
    return axes


def spectral_transform(fld, axes=None):
    """Forward transform of a scalar field over its periodic axes."""
    axes = _periodic_axes(fld.domain, axes)
    return SpectralCoeffs(fld.domain, np.fft.fftn(fld.values, axes=axes, norm="forward"), axes)


def inverse_transform(spec):
    vals = np.fft.ifftn(spec.coeffs, axes=spec.axes, norm="forward")
    return ScalarField(spec.domain, vals.real)


# --- discrete calculus -------------------------------------------------------


def _spectral_derivative(values, ax, length, order):
    n = values.shape[ax]
    k = 2 * np.pi / length * np.fft.rfftfreq(n, 1.0 / n)
    if order % 2:
        k[-1] = 0.0 if n % 2 == 0 else k[-1]
    shape = [1] * values.ndim
    shape[ax] = k.size
    mult = ((1j * k) ** order).reshape(shape)
    return np.fft.irfft(np.fft.rfft(values, axis=ax) * mult, n=n, axis=ax)


def _fd_first(values, ax, h):
    return np.gradient(values, h, axis=ax, edge_order=2)


def _fd_second(values, ax, h):
    v = np.moveaxis(values, ax, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    # one-sided second-order closure
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, ax)


def _axis_lengths(domain):
    if isinstance(domain, PeriodicBox):
        return [domain.side] * domain.dim
    if isinstance(domain, ChannelDomain):
        return [domain.L] + ([domain.Ly] if domain.ny is not None else []) + [1.0]
    return [2 * domain.X, domain.height]


def partial(values, domain, ax, order=1):
    """Derivative of a raw sample array along one axis of ``domain``."""
    if domain.periodic[ax]:
        return _spectral_derivative(values, ax, _axis_lengths(domain)[ax], order)
    h = domain.spacing[ax]
    if order == 1:
        return _fd_first(values, ax, h)
    if order == 2:
        return _fd_second(values, ax, h)
    raise ParameterError("only first and second derivatives on bounded axes")


def gradient(fld):
    d = fld.domain
    return VectorField(d, np.stack([partial(fld.values, d, ax) for ax in range(d.dim)]))


def divergence(vec):
    d = vec.domain
    if vec.ncomp != d.dim:
        raise ContractViolation("divergence needs one component per axis")
    return ScalarField(d, sum(partial(vec.values[ax], d, ax) for ax in range(d.dim)))


def curl(vec):
    """Scalar curl in 2D, vector curl in 3D."""
    d = vec.domain
    v = vec.values
    if d.dim == 2:
        return ScalarField(d, partial(v[1], d, 0) - partial(v[0], d, 1))
    out = np.stack(
        [
            partial(v[2], d, 1) - partial(v[1], d, 2),
            partial(v[0], d, 2) - partial(v[2], d, 0),
            partial(v[1], d, 0) - partial(v[0], d, 1),
        ]
    )
    return VectorField(d, out)


def laplacian(fld):
    d = fld.domain
    if isinstance(fld, VectorField):
        return VectorField(d, np.stack([laplacian(ScalarField(d, c)).values for c in fld.values]))
    return ScalarField(d, sum(partial(fld.values, d, ax, order=2) for ax in range(d.dim)))


def velocity_gradient(u):
    """Array g[i, j] = d u_i / d x_j."""
    d = u.domain
    return np.stack([np.stack([partial(c, d, j) for j in range(d.dim)]) for c in u.values])


# --- projection ----------------------------------------------------------------


def leray_project(vec):
    """Leray-Hodge projection onto divergence-free fields on a periodic box.

    The mean mode is passed through unchanged.
    """
    d = vec.domain
    if not isinstance(d, PeriodicBox):
        raise ContractViolation("leray_project is defined on PeriodicBox only")
    return VectorField(d, project_array(vec.values, d))


def project_array(v, domain):
    axes = tuple(range(1, domain.dim + 1))
    vh = np.fft.fftn(v, axes=axes)
    vh = project_hat(vh, domain.wavenumbers(nyquist=False))
    return np.fft.ifftn(vh, axes=axes).real


def project_hat(vh, ks):
    """Remove the longitudinal part k (k.v)/|k|^2 of full-layout coefficients."""
    k2 = sum(k * k for k in ks)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    kdotv = sum(k * c for k, c in zip(ks, vh))
    return np.stack([c - k * kdotv * inv for k, c in zip(ks, vh)])


# --- norms -------------------------------------------------------------------


def _pointwise_magnitude(fld):
    if isinstance(fld, VectorField):
        return np.sqrt(np.sum(fld.values**2, axis=0))
    return np.abs(fld.values)


def _cell_weights(domain):
    if isinstance(domain, ChannelDomain):
        w = domain.z_weights() * domain.L / domain.nx
        if domain.ny is not None:
            w = w * domain.Ly / domain.ny
        return w
    return domain.cell_volume


def l2_norm(fld):
    m2 = _pointwise_magnitude(fld) ** 2
    return float(np.sqrt(np.sum(m2 * _cell_weights(fld.domain))))


def linf_norm(fld):
    return float(np.max(_pointwise_magnitude(fld)))


def holder_seminorm(fld, alpha, reach=4):
    """Max of |f(x) - f(y)| / |x - y|^alpha over grid pairs within ``reach`` cells.

    Periodic axes wrap; bounded axes only pair points inside the domain.
    """
    if not 0 < alpha < 1:
        raise ParameterError(f"Hölder exponent must lie in (0, 1), got {alpha}")
    d = fld.domain
    vals = fld.values if isinstance(fld, VectorField) else fld.values[None]
    spacing = np.asarray(d.spacing)
    best = 0.0
    for off in product(range(-reach, reach + 1), repeat=d.dim):
        # half of the offsets suffice: (x, y) and (y, x) give the same quotient
        if off <= (0,) * d.dim:
            continue
        dist = float(np.sqrt(np.sum((np.asarray(off) * spacing) ** 2)))
        a, b = vals, vals
        for ax, o in enumerate(off):
            if o == 0:
                continue
            if d.periodic[ax]:
                b = np.roll(b, -o, axis=ax + 1)
            else:
                sl_a = [slice(None)] * vals.ndim
                sl_b = [slice(None)] * vals.ndim
                if o > 0:
                    sl_a[ax + 1], sl_b[ax + 1] = slice(0, -o), slice(o, None)
                else:
                    sl_a[ax + 1], sl_b[ax + 1] = slice(-o, None), slice(0, o)
                a, b = a[tuple(sl_a)], b[tuple(sl_b)]
        if a.size == 0:
            continue
        diff = np.sqrt(np.sum((a - b) ** 2, axis=0))
        best = max(best, float(diff.max()) / dist**alpha)
    return best


def norms(fld, alpha=0.5):
    """L2, L-infinity and Hölder-seminorm estimate of a field."""
    return {
        "L2": l2_norm(fld),
        "Linf": linf_norm(fld),
        "holder": holder_seminorm(fld, alpha),
    }


def dealias_mask(domain, rfft=True):
    """Boolean 2/3-rule mask for (r)fftn coefficient arrays of a periodic box."""
    masks = []
    for ax, v in enumerate(domain.n):
        idx = np.fft.fftfreq(v, 1.0 / v)
        if rfft and ax == domain.dim - 1:
            idx = np.fft.rfftfreq(v, 1.0 / v)
        m = np.abs(idx) < v / 3.0
        shape = [1] * domain.dim
        shape[ax] = m.size
        masks.append(m.reshape(shape))
    out = masks[0]
    for m in masks[1:]:
        out = out & m
    return out
