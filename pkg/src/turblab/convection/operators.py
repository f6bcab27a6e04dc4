"""The zero-order operator B = d_zz (Lap^2_DN)^-1 Lap_h, its logarithmic
L-infinity check, and the exponential-oscillatory kernel sums K(x, z)."""

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import eval_legendre, gammaincc, gamma

from ..errors import ContractViolation, ParameterError
from ..fields import ChannelDomain, ScalarField, holder_seminorm, linf_norm
from .vertical import second_derivative_clamped, solve_biharmonic


def _horizontal_wavenumbers(domain):
    kx = 2 * np.pi / domain.L * np.fft.rfftfreq(domain.nx, 1.0 / domain.nx)
    if domain.ny is None:
        return kx[:, None], (-2,)
    ky = 2 * np.pi / domain.Ly * np.fft.fftfreq(domain.ny, 1.0 / domain.ny)
    # rfft over the x axis last would reorder; transform y fully and x by rfft
    return np.sqrt(ky[None, :] ** 2 + kx[:, None] ** 2)[..., None], (-3, -2)


def _hfft(values, domain):
    if domain.ny is None:
        return np.fft.rfft(values, axis=0)
    return np.fft.fft(np.fft.rfft(values, axis=0), axis=1)


def _ihfft(coeffs, domain):
    if domain.ny is None:
        return np.fft.irfft(coeffs, n=domain.nx, axis=0)
    return np.fft.irfft(np.fft.ifft(coeffs, axis=1), n=domain.nx, axis=0)


def apply_B(theta, wall_tol=1e-10):
    """B theta per horizontal mode: solve (D^2 - m^2)^2 w = -m^2 theta_hat with
    w = w' = 0 at z = 0, 1 by banded elimination, return D^2 w.

    The horizontal mean (m = 0) is annihilated by the horizontal Laplacian,
    so that mode of the output is zero.
    """
    d = theta.domain
    if not isinstance(d, ChannelDomain):
        raise ContractViolation("apply_B acts on fields over a ChannelDomain")
    v = theta.values
    scale = max(np.abs(v).max(), 1e-300)
    if np.abs(v[..., 0]).max() > wall_tol * scale or np.abs(v[..., -1]).max() > wall_tol * scale:
        raise ContractViolation("theta must vanish at the walls")
    m, _ = _horizontal_wavenumbers(d)
    m = m[..., 0]
    th = _hfft(v, d)
    out = np.zeros_like(th)
    for idx in np.ndindex(m.shape):
        mk = m[idx]
        if mk == 0:
            continue
        w = solve_biharmonic(d.nz, mk, -(mk**2) * th[idx][1:-1])
        out[idx] = second_derivative_clamped(w, d.nz)
    return ScalarField(d, _ihfft(out, d))


def holder_norm(theta, alpha):
    """||theta||_inf + Hölder seminorm estimate."""
    return linf_norm(theta) + holder_seminorm(theta, alpha)


def log_plus(x):
    return np.log(np.maximum(x, 1.0))


def thm8_ratio(theta, alpha=0.5):
    """||B theta||_inf / (||theta||_inf (1 + log+ ||theta||_{C^0,alpha})^2)."""
    num = linf_norm(apply_B(theta))
    den = linf_norm(theta) * (1 + log_plus(holder_norm(theta, alpha))) ** 2
    return num / den


@dataclass
class Thm8Report:
    ratios: list
    sup: float
    median: float
    last_over_median: float
    bounded: bool


def oscillating_family(domain, count=7):
    """theta_j = sin(pi z) sin(2 pi 2^j x / L), j = 0 .. count-1."""
    if 2 ** (count - 1) > domain.nx // 4:
        raise ParameterError("highest family member needs at least 4 points per wavelength")
    x, z = domain.mesh()
    return [
        ScalarField(domain, np.sin(np.pi * z) * np.sin(2 * np.pi * 2**j * x / domain.L))
        for j in range(count)
    ]


def thm8_check(family, alpha=0.5):
    if len(family) < 4:
        raise ParameterError("thm8_check needs at least 4 family members")
    r = [thm8_ratio(th, alpha) for th in family]
    med = float(np.median(r))
    return Thm8Report(r, float(max(r)), med, r[-1] / med, r[-1] <= 2 * med)


# --- kernel sums ----------------------------------------------------------------


@dataclass(frozen=True)
class KernelParams:
    """K(x, z) = sum_k exp(2 pi i k.x / L) m_k^p exp(-eps(z) m_k), m_k = 2 pi |k| / L.

    ``eps`` is a callable of z or a constant; ``tail_tol`` bounds the
    certified truncation error relative to the retained absolute sum.
    """

    L: float = 1.0
    p: int = 1
    eps: object = 0.1
    tail_tol: float = 1e-10
    max_lattice_points: int = 2_000_000

    def __post_init__(self):
        if self.p not in (1, 2, 3):
            raise ParameterError("p must be 1, 2 or 3")
        if not self.L > 0:
            raise ParameterError("L must be positive")

    def epsilon(self, z):
        e = self.eps(z) if callable(self.eps) else self.eps
        if e < 0:
            raise ParameterError("eps(z) must be nonnegative")
        return float(e)


def _tail_bound(R, p, beta, c):
    """Integral-test bound for sum_{|k| > R} c^p |k|^p exp(-beta |k|) on Z^2."""
    a = max(R - np.sqrt(2.0), 0.0)

    def upper(q):
        return gammaincc(q + 1, beta * a) * gamma(q + 1) / beta ** (q + 1)

    return 2 * np.pi * c**p * (upper(p + 1) + np.sqrt(0.5) * upper(p))


def truncation_radius(params, eps):
    c = 2 * np.pi / params.L
    beta = eps * c
    p = params.p
    whole = 2 * np.pi * c**p * gamma(p + 2) / beta ** (p + 2)
    # the |k| = 1 shell alone is a lower bound on the retained sum
    floor = min(0.5 * whole, 4 * c**p * np.exp(-beta))
    R = max(np.sqrt(2.0) + 2 * p / beta, 2.0)
    while _tail_bound(R, p, beta, c) > params.tail_tol * floor:
        R *= 1.25
    return R


def _lattice(R):
    n = int(np.ceil(R))
    k = np.arange(-n, n + 1)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    keep = kx**2 + ky**2 <= R * R
    return np.stack([kx[keep], ky[keep]], axis=1).astype(float)


def kernel_direct(params, x, eps):
    """Truncated lattice sum with its certified tail bound; x has shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    c = 2 * np.pi / params.L
    R = truncation_radius(params, eps)
    k = _lattice(R)
    if len(k) > params.max_lattice_points:
        raise ParameterError(f"lattice sum needs {len(k)} terms; use the image sum")
    mk = c * np.sqrt(np.sum(k * k, axis=1))
    amp = mk**params.p * np.exp(-eps * mk)
    flat = x.reshape(-1, 2)
    out = np.empty(len(flat))
    for i in range(0, len(flat), 64):
        out[i : i + 64] = np.cos(c * flat[i : i + 64] @ k.T) @ amp
    tail = _tail_bound(R, params.p, eps * c, c)
    if tail > params.tail_tol * amp.sum():
        raise ContractViolation("lattice truncation failed its tail certificate")
    return out.reshape(x.shape[:-1]), tail


def _image_profile(rho, eps, p):
    """(p+1)! (rho^2 + eps^2)^(-(p+2)/2) P_{p+1}(eps / sqrt(rho^2 + eps^2))."""
    r2 = rho**2 + eps**2
    return factorial(p + 1) * r2 ** (-(p + 2) / 2) * eval_legendre(p + 1, eps / np.sqrt(r2))


def kernel_images(params, x, eps, nimages=60):
    """Poisson-summation form: (L^2 / 2 pi) sum_n H(|x - n L|).

    H is the radial Fourier integral of m^p exp(-eps m); images beyond
    radius ``nimages * L`` are replaced by their continuum integral.
    """
    x = np.asarray(x, dtype=float)
    L, p = params.L, params.p
    n = np.arange(-nimages, nimages + 1)
    nx, ny = np.meshgrid(n, n, indexing="ij")
    keep = nx**2 + ny**2 <= nimages**2
    shifts = L * np.stack([nx[keep], ny[keep]], axis=1).astype(float)
    flat = x.reshape(-1, 2)
    out = np.empty(len(flat))
    Rc = (nimages + 0.5) * L
    # tail: (1/L^2) int_{|y|>Rc} H(|y|) dy for the far-field form of H
    tail = 2 * np.pi / L**2 * factorial(p + 1) * eval_legendre(p + 1, 0.0) * Rc ** (-p) / p
    for i in range(0, len(flat), 16):
        d = flat[i : i + 16, None, :] - shifts[None]
        rho = np.sqrt(np.sum(d * d, axis=-1))
        out[i : i + 16] = _image_profile(rho, eps, p).sum(axis=1) + tail
    return (L**2 / (2 * np.pi) * out).reshape(x.shape[:-1])


def kernel_sum(params, x, z=None, eps=None, method="auto"):
    """K(x, z) and the companion [|x|^2 + eps^2]^(-(p+2)/2).

    Returns ``(K, bound_profile)``.  x has shape (..., 2) (horizontal
    position); eps defaults to ``params.epsilon(z)``.
    """
    x = np.asarray(x, dtype=float)
    if eps is None:
        eps = params.epsilon(z)
    r2 = np.sum(x * x, axis=-1) + eps**2
    if eps == 0 and np.any(np.sum(x * x, axis=-1) == 0):
        raise ContractViolation("K is singular at x = 0 when eps = 0")
    companion = r2 ** (-(params.p + 2) / 2)
    if method == "auto":
        method = "direct"
        if eps == 0:
            method = "images"
        else:
            R = truncation_radius(params, eps)
            if np.pi * R * R > params.max_lattice_points:
                method = "images"
    if method == "direct":
        K, _ = kernel_direct(params, x, eps)
    else:
        K = kernel_images(params, x, eps)
    return K, companion


def nearest_mode_asymptote(params, eps):
    """4 (2 pi / L)^p exp(-eps 2 pi / L): the |k| = 1 shell of K(0, z)."""
    c = 2 * np.pi / params.L
    return 4 * c**params.p * np.exp(-eps * c)


def decay_slope(params, direction=(0.0, 1.0), scales=None):
    """Least-squares slope of log|K| against log(|x|^2 + eps^2) along a ray.

    ``direction`` = (|x|, eps) unit ratio; points are s * direction for the
    given scales (fractions of L).
    """
    if scales is None:
        scales = np.geomspace(2e-3, 2e-2, 9) * params.L
    a, b = direction
    xs = np.array([[s * a, 0.0] for s in scales])
    logs_k, logs_r = [], []
    for xv, s in zip(xs, scales):
        K, comp = kernel_sum(params, xv, eps=s * b)
        logs_k.append(np.log(abs(float(K))))
        logs_r.append(np.log(float(xv @ xv + (s * b) ** 2)))
    slope = np.polyfit(logs_r, logs_k, 1)[0]
    return float(slope)
