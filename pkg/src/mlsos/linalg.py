"""Dense linear-algebra kernels (thin wrappers around LAPACK via numpy/scipy)."""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from mlsos.errors import NoConvergence, SingularMatrix


@dataclass(frozen=True)
class SymEigen:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def solve_linear(M, rhs):
    """Solve ``M x = rhs`` by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below ``1e-12 * ||M||_inf``.
    """
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if rhs.shape[0] != M.shape[0]:
        raise ValueError("rhs length does not match matrix rows")
    if M.shape[0] == 0:
        return rhs.copy()
    scale = np.abs(M).sum(axis=1).max()
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=True)
    if np.abs(np.diag(lu)).min() < 1e-12 * scale:
        raise SingularMatrix("pivot below 1e-12 * ||M||_inf")
    return sla.lu_solve((lu, piv), rhs)


def sym_eigen(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.size and np.abs(M - M.T).max() > 1e-9 * (1.0 + np.abs(M).max()):
        raise ValueError("matrix is not symmetric")
    S = 0.5 * (M + M.T)
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return SymEigen(w, V)


def rank(M, tol=1e-10):
    """Numerical rank: singular values below ``tol * sigma_max`` count as zero."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def independent_rows(M, tol=1e-10):
    """Indices of a maximal set of linearly independent rows, chosen greedily in order."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    keep = []
    for i in range(M.shape[0]):
        trial = keep + [i]
        if rank(M[trial], tol) == len(trial):
            keep = trial
    return keep


def cholesky_shifted(M):
    """Cholesky factor of a nearly-PSD matrix.

    On failure a diagonal shift of ``1e-12 * trace`` is added and escalated
    by factors of 10 up to ``1e-6 * trace``.  Returns ``(L, shift)``.
    """
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.cholesky(M), 0.0
    except np.linalg.LinAlgError:
        pass
    tr = max(np.trace(M), 1e-300)
    eye = np.eye(M.shape[0])
    shift = 1e-12 * tr
    while shift <= 1e-6 * tr * (1 + 1e-9):
        try:
            return np.linalg.cholesky(M + shift * eye), shift
        except np.linalg.LinAlgError:
            shift *= 10.0
    raise SingularMatrix("matrix is not positive definite even after diagonal shift")
