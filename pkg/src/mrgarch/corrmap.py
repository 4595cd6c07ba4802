"""Vector parametrization of correlation matrices via the matrix logarithm.

A nonsingular p x p correlation matrix C maps to the d = p(p-1)/2 vector of
below-diagonal elements of log(C); the map is a bijection onto R^d. The
forward direction is an eigendecomposition; the inverse recovers the
log-matrix diagonal by a fixed-point iteration that enforces a unit diagonal
on the reconstructed matrix. For p = 2 the map reduces to the Fisher
transform atanh(rho).

All matrix functions here act on symmetric matrices through their spectral
decomposition and never mutate their inputs.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError, NumericalError

# Relative eigenvalue floor below which a matrix counts as singular.
PD_RTOL = 1e-12

# Defaults for the fixed-point inversion.
FP_TOL = 1e-12
FP_MAX_ITER = 200


@lru_cache(maxsize=64)
def _lower_indices(p: int):
    """Row/column index arrays of the strict lower triangle, column-major.

    Column-major order means (1,0), (2,0), ..., (p-1,0), (2,1), ... which is
    the row-major order of the strict upper triangle with rows and columns
    swapped.
    """
    cols, rows = np.triu_indices(p, k=1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def _dim_from_tri_length(d: int) -> int:
    """Matrix dimension p such that p(p-1)/2 == d."""
    p = int(round((1.0 + np.sqrt(1.0 + 8.0 * d)) / 2.0))
    if p * (p - 1) // 2 != d:
        raise DimensionError(
            f"vector length {d} is not a triangular number p(p-1)/2"
        )
    return p


def vecl(m: np.ndarray) -> np.ndarray:
    """Stack the strict lower triangle of a square matrix, column by column."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    rows, cols = _lower_indices(m.shape[0])
    return m[rows, cols].copy()


def unvecl(v: np.ndarray, diag: np.ndarray | float = 0.0) -> np.ndarray:
    """Build the symmetric matrix whose strict lower triangle is ``v``.

    ``diag`` fills the diagonal (scalar or length-p vector, default zero).
    """
    v = np.asarray(v, dtype=float).ravel()
    p = _dim_from_tri_length(v.size)
    m = np.zeros((p, p))
    rows, cols = _lower_indices(p)
    m[rows, cols] = v
    m[cols, rows] = v
    m[np.diag_indices(p)] = diag
    return m


def _eigh_checked(m: np.ndarray, what: str):
    w, q = np.linalg.eigh(m)
    if w[-1] <= 0.0 or w[0] <= PD_RTOL * w[-1]:
        raise DomainError(
            f"{what} must be positive definite "
            f"(eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}])"
        )
    return w, q


def sym_log(m: np.ndarray) -> np.ndarray:
    """Matrix logarithm of a symmetric positive definite matrix."""
    m = np.asarray(m, dtype=float)
    w, q = _eigh_checked((m + m.T) / 2.0, "sym_log input")
    out = (q * np.log(w)) @ q.T
    return (out + out.T) / 2.0


def sym_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    w, q = np.linalg.eigh((m + m.T) / 2.0)
    out = (q * np.exp(w)) @ q.T
    return (out + out.T) / 2.0


def check_correlation(c: np.ndarray, atol: float = 1e-8) -> None:
    """Raise unless ``c`` is a nonsingular correlation matrix.

    Checks: square, symmetric, unit diagonal (within ``atol``), and positive
    definite relative to the largest eigenvalue. Returns None on success.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DomainError("correlation matrix has non-finite entries")
    if np.max(np.abs(c - c.T)) > atol:
        raise DomainError("correlation matrix is not symmetric")
    if np.max(np.abs(np.diag(c) - 1.0)) > atol:
        raise DomainError("correlation matrix diagonal is not one")
    _eigh_checked((c + c.T) / 2.0, "correlation matrix")
    return None


def corr_to_vec(c: np.ndarray) -> np.ndarray:
    """Map a correlation matrix to the lower triangle of its matrix log."""
    c = np.asarray(c, dtype=float)
    check_correlation(c)
    return vecl(sym_log(c))


def vec_to_corr_many(
    vs: np.ndarray,
    tol: float = FP_TOL,
    max_iter: int = FP_MAX_ITER,
    with_log_diag: bool = False,
):
    """Invert the log-vector map for a batch of vectors.

    ``vs`` has shape (n, d). Returns the (n, p, p) array of correlation
    matrices; with ``with_log_diag=True`` also returns the (n, p) diagonal of
    each log-matrix, whose row sums are the log-determinants of the
    correlation matrices.

    For each vector, the symmetric matrix with off-diagonals from the vector
    and free diagonal x is exponentiated; x is updated by
    x <- x - log(diag(exp)) until the reconstructed diagonal is within ``tol``
    of one. The returned matrices have their diagonal snapped to exactly one.
    """
    vs = np.asarray(vs, dtype=float)
    if vs.ndim != 2:
        raise DimensionError(f"expected a 2-d batch of vectors, got {vs.shape}")
    if not np.all(np.isfinite(vs)):
        raise DomainError("transformed correlation vector has non-finite entries")
    n, d = vs.shape
    p = _dim_from_tri_length(d)

    if p == 1:
        c = np.broadcast_to(np.eye(1), (n, 1, 1)).copy()
        if with_log_diag:
            return c, np.zeros((n, 1))
        return c

    rows, cols = _lower_indices(p)
    ar = np.arange(p)
    off = np.zeros((n, p, p))
    off[:, rows, cols] = vs
    off[:, cols, rows] = vs

    x = np.zeros((n, p))
    out = np.empty((n, p, p))
    log_diag = np.empty((n, p))
    active = np.ones(n, dtype=bool)
    worst = np.inf

    for _ in range(max_iter):
        sub = np.flatnonzero(active)
        if sub.size == 0:
            break
        a = off[sub]
        a[:, ar, ar] = x[sub]
        w, q = np.linalg.eigh(a)
        ew = np.exp(w)
        dexp = np.einsum("nij,nj,nij->ni", q, ew, q)
        resid = np.abs(dexp - 1.0).max(axis=1)
        worst = resid.max()
        conv = resid < tol
        if conv.any():
            hit = sub[conv]
            e = np.einsum("nij,nj,nkj->nik", q[conv], ew[conv], q[conv])
            e = (e + e.transpose(0, 2, 1)) / 2.0
            e[:, ar, ar] = 1.0
            out[hit] = e
            log_diag[hit] = x[hit]
            active[hit] = False
        miss = ~conv
        if miss.any():
            stale = sub[miss]
            x[stale] -= np.log(dexp[miss])

    if active.any():
        raise NumericalError(
            f"correlation reconstruction did not converge for "
            f"{int(active.sum())} of {n} vectors within {max_iter} iterations "
            f"(worst diagonal residual {worst:.3e})"
        )
    if with_log_diag:
        return out, log_diag
    return out


def vec_to_corr(
    v: np.ndarray, tol: float = FP_TOL, max_iter: int = FP_MAX_ITER
) -> np.ndarray:
    """Correlation matrix whose log-matrix lower triangle equals ``v``."""
    v = np.asarray(v, dtype=float).ravel()
    return vec_to_corr_many(v[None, :], tol=tol, max_iter=max_iter)[0]


def decompose_realized(rm: np.ndarray):
    """Split a realized covariance matrix into variances and correlation.

    Returns ``(x, big_y, y)`` where ``x`` is the diagonal of ``rm``,
    ``big_y`` the realized correlation matrix, and ``y`` its log-vector
    image. Raises if ``rm`` is not symmetric positive definite.
    """
    rm = np.asarray(rm, dtype=float)
    if rm.ndim != 2 or rm.shape[0] != rm.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {rm.shape}")
    if not np.all(np.isfinite(rm)):
        raise DomainError("realized measure has non-finite entries")
    if np.max(np.abs(rm - rm.T)) > 1e-8 * max(1.0, np.max(np.abs(rm))):
        raise DomainError("realized measure is not symmetric")
    x = np.diag(rm).copy()
    if np.any(x <= 0.0):
        raise DomainError("realized variances must be strictly positive")
    _eigh_checked((rm + rm.T) / 2.0, "realized measure")
    s = 1.0 / np.sqrt(x)
    big_y = s[:, None] * rm * s[None, :]
    big_y = (big_y + big_y.T) / 2.0
    big_y[np.diag_indices_from(big_y)] = 1.0
    return x, big_y, vecl(sym_log(big_y))


def repair_pd(m: np.ndarray, rel_floor: float = 1e-8) -> np.ndarray:
    """Clip small eigenvalues of a symmetric matrix, keeping its diagonal.

    Eigenvalues below ``rel_floor`` times the largest are raised to that
    floor; the result is then rescaled so its diagonal matches the input's,
    which leaves realized variances untouched and repairs only the
    correlation part. Matrices already above the floor are returned as-is.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    d0 = np.diag(m).copy()
    if np.any(d0 <= 0.0):
        raise DomainError("cannot repair a matrix with non-positive diagonal")
    sym = (m + m.T) / 2.0
    w, q = np.linalg.eigh(sym)
    if w[-1] <= 0.0:
        raise DomainError("cannot repair a matrix with no positive eigenvalue")
    floor = rel_floor * w[-1]
    if w[0] > floor:
        return m.copy()
    rebuilt = (q * np.maximum(w, floor)) @ q.T
    rebuilt = (rebuilt + rebuilt.T) / 2.0
    s = np.sqrt(d0 / np.diag(rebuilt))
    out = s[:, None] * rebuilt * s[None, :]
    out[np.diag_indices_from(out)] = d0
    return out
