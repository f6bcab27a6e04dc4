"""Second-order vertical operators on the node grid z_j = j / nz.

Unknowns live on the interior nodes j = 1 .. nz-1; wall values are zero
(homogeneous Dirichlet).  The clamped biharmonic also imposes a zero wall
derivative through the reflected ghost value w_{-1} = w_1.
"""

import numpy as np
from scipy.linalg import solve_banded


def d2_matrix(nz):
    n = nz - 1
    h = 1.0 / nz
    return (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2


def d4_clamped_matrix(nz):
    n = nz - 1
    h = 1.0 / nz
    A = (
        np.diag(6.0 * np.ones(n))
        + np.diag(-4.0 * np.ones(n - 1), 1)
        + np.diag(-4.0 * np.ones(n - 1), -1)
        + np.diag(np.ones(n - 2), 2)
        + np.diag(np.ones(n - 2), -2)
    )
    A[0, 0] += 1.0
    A[-1, -1] += 1.0
    return A / h**4


def biharmonic_matrix(nz, m):
    """(d^2/dz^2 - m^2)^2 with clamped walls, as a dense matrix."""
    D2 = d2_matrix(nz)
    return d4_clamped_matrix(nz) - 2 * m**2 * D2 + m**4 * np.eye(nz - 1)


def biharmonic_banded(nz, m):
    """Same operator in LAPACK banded storage with (2, 2) bands."""
    n = nz - 1
    h = 1.0 / nz
    ab = np.zeros((5, n))
    ab[0, 2:] = 1.0 / h**4
    ab[1, 1:] = -4.0 / h**4 - 2 * m**2 / h**2
    ab[2, :] = 6.0 / h**4 + 4 * m**2 / h**2 + m**4
    ab[2, 0] += 1.0 / h**4
    ab[2, -1] += 1.0 / h**4
    ab[3, :-1] = -4.0 / h**4 - 2 * m**2 / h**2
    ab[4, :-2] = 1.0 / h**4
    return ab


def solve_biharmonic(nz, m, rhs):
    """Banded elimination for (D^2 - m^2)^2 w = rhs with w = w' = 0 at both walls."""
    ab = biharmonic_banded(nz, m)
    if np.iscomplexobj(rhs):
        return solve_banded((2, 2), ab, rhs.real) + 1j * solve_banded((2, 2), ab, rhs.imag)
    return solve_banded((2, 2), ab, rhs)


def second_derivative_clamped(w_int, nz):
    """d^2 w / dz^2 on all nodes for w vanishing with zero slope at the walls."""
    h = 1.0 / nz
    w = np.zeros(w_int.shape[:-1] + (nz + 1,), dtype=w_int.dtype)
    w[..., 1:-1] = w_int
    out = np.zeros_like(w)
    out[..., 1:-1] = (w[..., 2:] - 2 * w[..., 1:-1] + w[..., :-2]) / h**2
    out[..., 0] = 2 * w[..., 1] / h**2
    out[..., -1] = 2 * w[..., -2] / h**2
    return out


def centred_dz(f, nz):
    """Central z-derivative on interior nodes of a full-node array (last axis)."""
    h = 1.0 / nz
    return (f[..., 2:] - f[..., :-2]) / (2 * h)


def staggered_dz(f, nz):
    """Forward differences located at cell mid-points (nz values)."""
    return np.diff(f, axis=-1) * nz
