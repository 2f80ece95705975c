"""Dense Hermitian linear algebra with explicit tolerance contracts.

Matrices are plain numpy arrays in row-major order with complex128 entries.
All relative tolerances are taken against the operator norm of the input;
the named constants below are the single source of truth for the package.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import BoundaryEigenvalue, NonHermitian, Singular

__all__ = [
    "TOL_EIG",
    "TOL_SOLVE",
    "TOL_HERM",
    "GAP_TOL",
    "COND_CAP",
    "PIVOT_FLOOR",
    "HermEig",
    "as_matrix",
    "adjoint",
    "herm_eig",
    "solve",
    "solve_right",
    "propagator",
    "spectral_projection",
    "op_norm",
]

# Relative accuracy expected of eigenpairs (residual ||A v - lam v|| / ||A||).
TOL_EIG = 1e-12
# Relative residual allowed for a linear solve, before conditioning.
TOL_SOLVE = 1e-12
# Hermiticity defect ||A - A*|| / ||A|| accepted by herm_eig.
TOL_HERM = 1e-10
# Relative guard band around interval endpoints for spectral projections.
GAP_TOL = 1e-9
# Largest condition number tolerated for weight operators.
COND_CAP = 1e8
# Pivot floor for LU solves, relative to the largest entry magnitude.
PIVOT_FLOOR = 1e-14


class HermEig(NamedTuple):
    """Eigenvalues ascending, eigenvectors as orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a) -> np.ndarray:
    """Coerce to a C-contiguous complex128 2-d array."""
    m = np.ascontiguousarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d array, got ndim={m.ndim}")
    return m


def adjoint(a) -> np.ndarray:
    return np.conj(np.asarray(a)).T


def herm_eig(a) -> HermEig:
    """Full eigendecomposition of a Hermitian matrix.

    Raises NonHermitian when ||A - A*|| > TOL_HERM * ||A|| and NoConvergence
    (via numpy's LinAlgError, re-raised) if the LAPACK driver fails.
    """
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError("herm_eig needs a square matrix")
    scale = np.abs(m).max() if m.size else 0.0
    defect = np.abs(m - adjoint(m)).max()
    if defect > TOL_HERM * max(scale, 1e-300):
        raise NonHermitian(
            f"hermiticity defect {defect:.3e} exceeds {TOL_HERM:.1e} * scale"
        )
    h = 0.5 * (m + adjoint(m))
    try:
        vals, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        from .errors import NoConvergence

        raise NoConvergence(str(exc)) from exc
    return HermEig(vals, vecs)


def solve(a, b) -> np.ndarray:
    """Solve A X = B by LU with partial pivoting.

    Raises Singular when any U pivot falls below PIVOT_FLOOR times the
    largest entry magnitude of A.
    """
    m = as_matrix(a)
    rhs = np.asarray(b, dtype=np.complex128)
    lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    floor = PIVOT_FLOOR * max(np.abs(m).max(), 1e-300)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < floor:
        raise Singular(
            f"pivot {pivots.min():.3e} below floor {floor:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def solve_right(b, a) -> np.ndarray:
    """Solve X A = B, i.e. X = B A^{-1}, reusing the pivot-floor contract."""
    return solve(np.asarray(a).T, np.asarray(b).T).T


def propagator(a, t: float) -> np.ndarray:
    """Unitary exp(i A t) for Hermitian A via the eigendecomposition."""
    vals, vecs = herm_eig(a)
    phase = np.exp(1j * vals * t)
    return (vecs * phase) @ adjoint(vecs)


def propagator_from_eig(eig: HermEig, t: float) -> np.ndarray:
    """Same as propagator but reusing a precomputed decomposition."""
    phase = np.exp(1j * eig.eigenvalues * t)
    return (eig.eigenvectors * phase) @ adjoint(eig.eigenvectors)


def spectral_projection(a, interval) -> np.ndarray:
    """Orthogonal projection onto eigenvectors with eigenvalue in (a, b).

    Raises BoundaryEigenvalue if any eigenvalue sits within
    GAP_TOL * max(1, ||A||) of either endpoint; the projection would then
    be ill-defined at working precision.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("interval must satisfy a < b")
    vals, vecs = herm_eig(a)
    guard = GAP_TOL * max(1.0, np.abs(vals).max() if vals.size else 0.0)
    if np.any(np.abs(vals - lo) < guard) or np.any(np.abs(vals - hi) < guard):
        raise BoundaryEigenvalue(
            f"eigenvalue within {guard:.3e} of interval endpoint"
        )
    keep = (vals > lo) & (vals < hi)
    sub = vecs[:, keep]
    return sub @ adjoint(sub)


def op_norm(a) -> float:
    """Operator (spectral) norm of a rectangular complex matrix."""
    m = np.asarray(a, dtype=np.complex128)
    if m.size == 0:
        return 0.0
    if m.ndim == 1:
        return float(np.linalg.norm(m))
    g = adjoint(m) @ m
    top = np.linalg.eigvalsh(g)[-1]
    return float(np.sqrt(max(top, 0.0)))
