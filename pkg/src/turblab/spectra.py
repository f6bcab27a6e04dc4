"""Littlewood-Paley bands, the LP energy spectrum and its bound envelopes.

On a periodic box the dyadic pieces are Fourier multipliers: the low-pass
part of u is phi(L|k|) u_hat and band m is psi_(m)(L|k|) u_hat with
psi_(m)(xi) = psi_(0)(2^-m xi) and psi_(0)(xi) = phi(xi/2) - phi(xi).
Wavenumbers are angular.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dct, dst

from .errors import ContractViolation, ParameterError
from .fields import PeriodicBox, partial

PLATEAU = 5.0 / 8.0
SUPPORT = 3.0 / 4.0


def _g(t):
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, np.exp(-1.0 / safe), 0.0)


@dataclass(frozen=True)
class Mollifier:
    """Radial smooth step: 1 on [0, 5/8], 0 on [3/4, inf)."""

    plateau: float = PLATEAU
    support: float = SUPPORT

    def __call__(self, r):
        t = np.clip((np.asarray(r, dtype=float) - self.plateau) / (self.support - self.plateau), 0.0, 1.0)
        a, b = _g(1.0 - t), _g(t)
        return a / (a + b)

    def band(self, xi):
        """psi_(0)(xi) = phi(xi / 2) - phi(xi)."""
        return self(np.asarray(xi) / 2.0) - self(xi)


def build_mollifier():
    return Mollifier()


@dataclass
class LPBands:
    L: float
    M: int
    low: np.ndarray  # u_(-inf), component axis first
    bands: list  # u_(0) .. u_(M)
    box: PeriodicBox

    def reconstruct(self):
        return self.low + sum(self.bands)


def _radial_k(box):
    ks = [2 * np.pi / box.side * np.fft.fftfreq(n, 1.0 / n) for n in box.n]
    grids = np.meshgrid(*ks, indexing="ij")
    return np.sqrt(sum(k * k for k in grids))


def bands_needed(box, L):
    """Smallest M with phi(2^-(M+1) L k_max) = 1, i.e. the last band covers every grid mode."""
    kmax = float(_radial_k(box).max())
    M = 0
    while 2.0 ** -(M + 1) * L * kmax > PLATEAU:
        M += 1
    return M


def lp_decompose(u, L, M=None):
    """Exact LP pieces of a periodic field (scalar or vector values)."""
    box = u.domain
    if not isinstance(box, PeriodicBox):
        raise ContractViolation("LP decomposition acts on periodic fields")
    if not L > 0:
        raise ParameterError("L must be positive")
    phi = build_mollifier()
    need = bands_needed(box, L)
    M = need if M is None else M
    if M < need:
        raise ParameterError(f"M = {M} leaves grid modes uncovered; need M >= {need}")
    v = u.values
    axes = tuple(range(v.ndim - box.dim, v.ndim))
    vh = np.fft.fftn(v, axes=axes)
    xi = L * _radial_k(box)

    def back(mult):
        return np.fft.ifftn(vh * mult, axes=axes).real

    low = back(phi(xi))
    bands = [back(phi.band(2.0**-m * xi)) for m in range(M + 1)]
    return LPBands(L, M, low, bands, box)


@dataclass
class SpectrumReport:
    k_lo: np.ndarray
    k_hi: np.ndarray
    E_LP: np.ndarray
    band_energy: np.ndarray  # <|u_(m)|^2>
    L: float
    scalars: dict = field(default_factory=dict)
    envelopes: dict = field(default_factory=dict)

    @property
    def shells(self):
        return list(zip(self.k_lo, self.k_hi))


def lp_spectrum(snapshots, L, M=None, weights=None):
    """E_LP on shells [k_(m-1), k_m), k_m = 2^m / L, averaged over snapshots.

    ``snapshots`` is a sequence of fields (or LPBands); the space average is
    the normalised mean over the box and the time average uses ``weights``
    (uniform by default).  Note that the bands overlap in Fourier space, so
    sum_m E_LP (k_m - k_(m-1)) = sum_m <|u_(m)|^2> / 2 is bookkeeping, not
    Parseval.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ContractViolation("empty averaging window")
    decs = [s if isinstance(s, LPBands) else lp_decompose(s, L, M) for s in snapshots]
    Ms = {d.M for d in decs}
    if len(Ms) != 1:
        raise ContractViolation("snapshots decomposed with different band counts")
    M = Ms.pop()
    w = np.full(len(decs), 1.0 / len(decs)) if weights is None else np.asarray(weights) / np.sum(weights)
    energy = np.zeros(M + 1)
    for wi, d in zip(w, decs):
        lead = d.bands[0].ndim - d.box.dim
        for m, b in enumerate(d.bands):
            sq = np.sum(b**2, axis=tuple(range(lead))) if lead else b**2
            energy[m] += wi * float(np.mean(sq))
    m = np.arange(M + 1)
    k_hi = 2.0**m / L
    return SpectrumReport(k_hi / 2, k_hi, energy / k_hi, energy, L)


# --- C_psi ---------------------------------------------------------------------


def _psi0_transform(rmax, pad=8):
    """Radial 3D inverse transform Psi_0(r) = (2 pi)^-3 int psi_0(|xi|) e^(i xi.x) dxi and
    its derivative on r_k = k pi / ((N+1) ds), by sine/cosine transforms."""
    phi = build_mollifier()
    ds = np.pi / rmax
    ns = int(np.ceil(1.5 / ds)) + 1
    N = 2 ** int(np.ceil(np.log2(ns * pad)))
    s = np.arange(1, N + 1) * ds
    p = np.where(s <= 1.5, phi.band(s), 0.0)
    r = np.arange(1, N + 1) * np.pi / ((N + 1) * ds)
    Is = dst(p * s, type=1) / 2 * ds  # int psi s sin(s r) ds
    # int psi s^2 cos(s r) ds; the s = 0 sample contributes nothing
    Ic = dct(np.concatenate([[0.0], p * s * s, [0.0]]), type=1)[1:-1] / 2 * ds
    # the DCT-I grid has spacing pi / ((N+1) ds) as well
    c = 1.0 / (2 * np.pi**2)
    Psi = c * Is / r
    dPsi = -Psi / r + c * Ic / r
    return r, Psi, dPsi


def _c_psi(rmax, pad):
    r, Psi, dPsi = _psi0_transform(rmax, pad)
    A = 4 * np.pi * np.trapezoid(np.abs(dPsi) * r**4, r)
    B = 4 * np.pi * np.trapezoid(np.abs(Psi) * r**3, r)
    return A * B


@lru_cache(maxsize=None)
def c_psi_constant(rmax=2e4, pad=8, tol=5e-3):
    """C_psi = int |grad Psi_0(a)| |a|^2 da * int |Psi_0(b)| |b| db in 3D.

    Evaluated on (rmax, pad) and on the grid with both the frequency and the
    radial steps halved; raises if the two differ by more than ``tol``.
    Returns (value, relative change).
    """
    coarse = _c_psi(rmax, pad)
    fine = _c_psi(2 * rmax, pad)
    change = abs(fine - coarse) / abs(fine)
    if not change <= tol:
        raise ContractViolation(f"C_psi quadrature not converged: {coarse} vs {fine}")
    return float(fine), float(change)


# --- bound envelopes --------------------------------------------------------------


def window_scalars(snapshots, nu, omegas=None):
    """tau^-1 = <max |grad u|_F>, eps = nu <|grad u|^2>, eps_hat = nu <|grad u|^3>^(2/3),
    eta = nu <|grad omega|^2> (2D, from the given vorticities), k_d_hat, eta_hat."""
    gmax, g2, g3, eta = [], [], [], []
    for u in snapshots:
        d = u.domain
        grad_sq = sum(partial(c, d, j) ** 2 for c in u.values for j in range(d.dim))
        gmax.append(float(np.sqrt(grad_sq.max())))
        g2.append(float(np.mean(grad_sq)))
        g3.append(float(np.mean(grad_sq**1.5)))
    for w in omegas or []:
        d = w.domain
        eta.append(nu * float(np.mean(sum(partial(w.values, d, j) ** 2 for j in range(d.dim)))))
    out = {"tau_inv": float(np.mean(gmax)), "eps": nu * float(np.mean(g2))}
    m3 = float(np.mean(g3))
    out["grad_cubed"] = m3
    if np.isfinite(m3) and m3 > 0:
        out["eps_hat"] = nu * m3 ** (2.0 / 3.0)
        out["k_d_hat"] = nu**-0.75 * out["eps_hat"] ** 0.25
        out["eta_hat"] = nu**0.75 * out["eps_hat"] ** -0.25
    else:
        out["eps_hat"] = float("nan")
    if eta:
        out["eta"] = float(np.mean(eta))
    return out


def thm9_envelope(k, tau_inv, nu, C=1.0):
    """C k^-3 tau^-2 (k_d / k)^6 with k_d = (nu tau)^(-1/2)."""
    k_d = np.sqrt(tau_inv / nu)
    return C * k**-3.0 * tau_inv**2 * (k_d / k) ** 6


def thm10_envelope(k, eps_hat, k_d_hat, C=1.0):
    return C * eps_hat ** (2.0 / 3.0) * k ** (-5.0 / 3.0) * (k / k_d_hat) ** (-10.0 / 3.0)


def bound_curves(report, nu, regime, constants=None):
    """Per-shell envelopes evaluated at the shell's upper edge k_m.

    Adds Kolmogorov (C_Kl <eps>^(2/3) k^(-5/3)) and Kraichnan
    (C_Kr <eta>^(2/3) k^(-3)) reference curves when their rates are known.
    """
    c = {"C": 1.0, "C_Kl": 1.0, "C_Kr": 1.0}
    c.update(constants or {})
    s = report.scalars
    k = report.k_hi
    env = {}
    if regime == "thm9_2d":
        env["thm9"] = thm9_envelope(k, s["tau_inv"], nu, c["C"])
        s["k_d"] = float(np.sqrt(s["tau_inv"] / nu))
    elif regime == "thm10_3d":
        if not np.isfinite(s.get("eps_hat", np.nan)):
            raise ContractViolation("<|grad u|^3> is not finite; the 3D envelope needs it bounded")
        C = c["C"] if "C" in (constants or {}) else c_psi_constant()[0]
        env["thm10"] = thm10_envelope(k, s["eps_hat"], s["k_d_hat"], C)
    else:
        raise ParameterError(f"unknown regime {regime!r}")
    if "eps" in s:
        env["kolmogorov"] = c["C_Kl"] * s["eps"] ** (2.0 / 3.0) * k ** (-5.0 / 3.0)
    if "eta" in s:
        env["kraichnan"] = c["C_Kr"] * s["eta"] ** (2.0 / 3.0) * k**-3.0
    report.envelopes.update(env)
    return env


def empirical_constant(report, envelope, k_min=None):
    """max over shells with k_m >= k_min of E_LP / envelope."""
    k = report.k_hi
    sel = np.ones_like(k, dtype=bool) if k_min is None else k >= k_min
    sel &= report.E_LP > 0
    return float(np.max(report.E_LP[sel] / envelope[sel]))
