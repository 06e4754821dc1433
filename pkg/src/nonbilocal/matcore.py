"""Dense complex linear algebra helpers.

Matrices are plain ``numpy`` arrays; nothing here is larger than 16x16.
"""

from functools import reduce

import numpy as np

from .errors import NotSymmetric

# structural checks (hermiticity, completeness, symmetry)
STRUCT_TOL = 1e-12
# optimizer matching tolerances
ANALYTIC_TOL = 1e-6
DERIVATIVE_FREE_TOL = 1e-4


def as_matrix(m) -> np.ndarray:
    return np.asarray(m, dtype=complex)


def kron(a, b) -> np.ndarray:
    """Kronecker product, ``result[i*db + k, j*db + l] = a[i, j] * b[k, l]``."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(*mats) -> np.ndarray:
    return reduce(kron, mats)


def dagger(m) -> np.ndarray:
    return as_matrix(m).conj().T


def trace(m) -> complex:
    return complex(np.trace(m))


def hermiticity_residual(m) -> float:
    m = as_matrix(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def eig_sym3(m, tol: float = STRUCT_TOL) -> np.ndarray:
    """Eigenvalues of a real symmetric 3x3 matrix, sorted descending.

    Negative eigenvalues with magnitude below ``tol`` are clamped to zero
    (they come from round-off in products like ``T.T @ T``).
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T)))
    if asym > tol:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {tol:.1e}")
    vals = np.linalg.eigvalsh(0.5 * (m + m.T))[::-1].copy()
    vals[(vals < 0) & (vals > -tol)] = 0.0
    return vals


def is_density_matrix(m, tol: float = STRUCT_TOL) -> bool:
    """Hermitian, unit trace and positive semidefinite, all within ``tol``."""
    m = as_matrix(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    if hermiticity_residual(m) > tol:
        return False
    if abs(np.trace(m) - 1.0) > tol:
        return False
    evals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return bool(evals.min() >= -tol)
