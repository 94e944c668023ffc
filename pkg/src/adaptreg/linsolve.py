"""Sparse LU solves and extreme-eigenvalue estimates for the coupled system."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    """Factorisation failed; ``pivot`` is the offending column when known."""

    def __init__(self, msg, pivot=None):
        super().__init__(msg if pivot is None else f"{msg} (pivot {pivot})")
        self.pivot = pivot


def _matrix(system):
    return getattr(system, "matrix", system)


@dataclass
class SparseFactorization:
    lu: spla.SuperLU
    matrix: sp.csc_matrix

    @property
    def shape(self):
        return self.matrix.shape


def lu_factor(system):
    """LU-factorise a :class:`LinearSystem` (or a bare sparse matrix).

    Columns are reordered by COLAMD and rows by partial pivoting.

    Raises
    ------
    SingularMatrixError
        On an empty row/column, an exactly singular factor, or a zero
        pivot on the diagonal of U.
    """
    A = sp.csc_matrix(_matrix(system), dtype=float)
    n, m = A.shape
    if n != m:
        raise ValueError("matrix must be square")
    col_nnz = np.diff(A.indptr)
    if np.any(col_nnz == 0):
        raise SingularMatrixError("structurally singular: empty column",
                                  int(np.flatnonzero(col_nnz == 0)[0]))
    row_nnz = np.bincount(A.indices[A.data != 0], minlength=n)
    if np.any(row_nnz == 0):
        raise SingularMatrixError("structurally singular: empty row",
                                  int(np.flatnonzero(row_nnz == 0)[0]))
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(f"numerically singular: {exc}") from None
    udiag = lu.U.diagonal()
    bad = np.flatnonzero(udiag == 0.0)
    if bad.size:
        col = int(np.flatnonzero(lu.perm_c == bad[0])[0])
        raise SingularMatrixError("numerically singular: zero pivot", col)
    return SparseFactorization(lu, A)


def lu_solve(fact, b, refine=3):
    """Solve ``A x = b`` with a few steps of iterative refinement."""
    b = np.asarray(b, dtype=float)
    x = fact.lu.solve(b)
    r = b - fact.matrix @ x
    rn = np.linalg.norm(r)
    for _ in range(refine):
        if rn == 0.0:
            break
        x_new = x + fact.lu.solve(r)
        r_new = b - fact.matrix @ x_new
        rn_new = np.linalg.norm(r_new)
        if rn_new >= rn:
            break
        x, r, rn = x_new, r_new, rn_new
    return x


def relative_residual(A, x, b):
    bn = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / bn if bn > 0 else r


@dataclass(frozen=True)
class SpectrumEstimate:
    lambda_max_mag: float
    lambda_min_mag: float
    iterations_used: int
    converged: bool

    @property
    def cond(self):
        return self.lambda_max_mag / self.lambda_min_mag


def _dominant(apply, n, tol, max_iter, rng):
    """Power iteration for the magnitude of the dominant eigenvalue.

    Returns ``(|lambda|, iterations, converged)``.  The Rayleigh quotient of
    the normalised iterate is the estimate; if it stalls while the iterate
    keeps turning (a complex pair of equal modulus), the iteration restarts
    from a fresh random vector and falls back to ``|A x|``.
    """
    restarts = 0
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam_old = None
    used = 0
    stall = 0
    for it in range(1, max_iter + 1):
        used = it
        y = apply(x)
        lam = abs(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, used, True
        x_new = y / ny
        turning = abs(x_new @ x) < 0.5
        x = x_new
        if lam_old is not None and abs(lam - lam_old) <= tol * max(lam, 1e-300):
            return lam, used, True
        stall = stall + 1 if turning else 0
        if stall > 50 and restarts < 2:
            restarts += 1
            stall = 0
            x = rng.standard_normal(n)
            x /= np.linalg.norm(x)
            lam_old = None
            continue
        lam_old = lam
    return max(lam, ny), used, False


def eig_extremes(system, tol=1e-8, max_iter=20000, seed=0):
    """Estimate the largest and smallest eigenvalue magnitudes.

    The largest comes from power iteration on the matrix, the smallest
    from inverse power iteration through the sparse LU factors.
    """
    A = sp.csr_matrix(_matrix(system), dtype=float)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    lmax, it1, ok1 = _dominant(lambda v: A @ v, n, tol, max_iter, rng)
    fact = lu_factor(A)
    inv, it2, ok2 = _dominant(lambda v: fact.lu.solve(v), n, tol, max_iter, rng)
    return SpectrumEstimate(lmax, 1.0 / inv, it1 + it2, ok1 and ok2)


def dense_extremes(system):
    """Dense eigensolver oracle: ``(max |lambda|, min |lambda|)``."""
    A = _matrix(system)
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    mags = np.abs(np.linalg.eigvals(A))
    return float(mags.max()), float(mags.min())
