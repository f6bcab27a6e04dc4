"""Nusselt number, the two energy identities, the fluctuation quantity n, and
the closed-form Nusselt bounds.

Averages over the layer use the trapezoid rule on the nodes for horizontal
derivatives and mid-point values for vertical differences, which is the
summation-by-parts partner of the second-difference Laplacian.
"""

import numpy as np

from ..errors import ParameterError
from ..series import DiagnosticsSeries
from .operators import log_plus

CHANNELS = ("wT", "nu_bottom", "nu_top", "grad_T_sq", "grad_u_sq", "n")
STATIONARY_TOL = 0.02
MIN_WINDOW = 10.0


def _dx(f, L):
    n = f.shape[0]
    k = 2 * np.pi / L * np.fft.rfftfreq(n, 1.0 / n)
    return np.fft.irfft(1j * k[:, None] * np.fft.rfft(f, axis=0), n=n, axis=0)


def _node_mean(f, domain):
    return float(np.mean(f @ domain.z_weights()))


def _cell_mean(f):
    return float(np.mean(f))


def grad_sq_mean(f, domain):
    """<|grad f|^2> with spectral x-derivatives and staggered z-differences."""
    fz = np.diff(f, axis=-1) * domain.nz
    return _node_mean(_dx(f, domain.L) ** 2, domain) + _cell_mean(fz**2)


def convection_sample(u, T, domain):
    """Instantaneous layer averages; u has components (u, w) on the nodes."""
    nz = domain.nz
    Tb = T.mean(axis=0, keepdims=True)
    nb = -float(np.mean(-3 * T[:, 0] + 4 * T[:, 1] - T[:, 2])) * nz / 2
    nt = -float(np.mean(3 * T[:, -1] - 4 * T[:, -2] + T[:, -3])) * nz / 2
    return {
        "wT": _node_mean(u[-1] * T, domain),
        "nu_bottom": nb,
        "nu_top": nt,
        "grad_T_sq": grad_sq_mean(T, domain),
        "grad_u_sq": sum(grad_sq_mean(c, domain) for c in u),
        "n": grad_sq_mean(T - Tb, domain),
    }


def new_history():
    return DiagnosticsSeries(CHANNELS)


def record(history, t, u, T, domain):
    history.append(t, **convection_sample(u, T, domain))
    return history


def _window(history, t_start):
    t = history.array("t")
    if t_start is None:
        t_start = t[0] + 0.5 * (t[-1] - t[0])
    sel = t >= t_start
    if sel.sum() < 2:
        raise ParameterError("averaging window holds fewer than two samples")
    return t[sel], sel


def _avg(t, v):
    return float(np.trapezoid(v, t) / (t[-1] - t[0]))


def nusselt_and_identities(history, Ra, t_start=None, sigma=1.0, time_unit=None):
    """Time averages over [t_start, t_end] (default: second half of the record).

    N = 1 + <w T>.  Returns N, I_T, I_u, the two identity residuals, the
    half-window drift of N, a stationarity verdict and a low-confidence flag
    (window shorter than 10 convective times, 1 / sqrt(sigma Ra) each unless
    ``time_unit`` is given).
    """
    t, sel = _window(history, t_start)
    N = 1.0 + _avg(t, history.array("wT")[sel])
    IT = _avg(t, history.array("grad_T_sq")[sel])
    Iu = _avg(t, history.array("grad_u_sq")[sel])
    mid = len(t) // 2
    halves = []
    for part in (slice(0, mid + 1), slice(mid, None)):
        tp = t[part]
        halves.append(1.0 + _avg(tp, history.array("wT")[sel][part]) if len(tp) > 1 else N)
    drift = abs(halves[0] - halves[1]) / N
    unit = time_unit if time_unit is not None else 1.0 / np.sqrt(sigma * Ra)
    return {
        "N": N,
        "I_T": IT,
        "I_u": Iu,
        "res_T": abs(IT - N) / N,
        "res_u": abs(Iu - Ra * (N - 1)) / max(1.0, Ra * (N - 1)),
        "drift": drift,
        "stationary": drift <= STATIONARY_TOL,
        "low_confidence": (t[-1] - t[0]) < MIN_WINDOW * unit,
        "window": (float(t[0]), float(t[-1])),
    }


def fluctuation_n(history, t_start=None):
    t, sel = _window(history, t_start)
    return _avg(t, history.array("n")[sel])


def nusselt_bounds(Ra=None, sigma=None, E=None, R=None, n=None, constants=None):
    """Closed-form Nusselt bounds; all constants default to 1.

    thm5      1 + C sqrt(Ra)
    thm6      1 + min{c1 R^(2/5), (c2 E^2 + c3 E) R^2, c4 R^(1/3) (1/E + log+ R)^(2/3)}
    thm7_full 1 + c (n Ra)^(1/3)
    thm7_ip   1 + C7 (Ra (log+ Ra)^2 sqrt(n))^(2/7)
    sigma enters none of them; it is accepted for a uniform call signature.
    """
    c = {"C": 1.0, "c1": 1.0, "c2": 1.0, "c3": 1.0, "c4": 1.0, "c": 1.0, "C7": 1.0}
    c.update(constants or {})
    out = {}
    if Ra is not None:
        out["thm5"] = 1 + c["C"] * np.sqrt(Ra)
    if R is not None and E is not None:
        inv_e = 0.0 if np.isinf(E) else 1.0 / E
        branches = [
            c["c1"] * R ** 0.4,
            (c["c2"] * E**2 + c["c3"] * E) * R**2,
            c["c4"] * R ** (1 / 3) * (inv_e + log_plus(R)) ** (2 / 3),
        ]
        out["thm6"] = 1 + min(branches)
        out["thm6_branch"] = int(np.argmin(branches))
    if Ra is not None and n is not None:
        out["thm7_full"] = 1 + c["c"] * (n * Ra) ** (1 / 3)
        out["thm7_ip"] = 1 + c["C7"] * (Ra * log_plus(Ra) ** 2 * np.sqrt(n)) ** (2 / 7)
    return out
