"""Block correlation structures, factor loadings, and their closed forms.

Assets are grouped into contiguous blocks. A block correlation matrix has a
common within-block correlation for each block and a common between-block
correlation for each block pair, which reduces the d = p(p-1)/2 correlation
components to k = b(b-1)/2 + #{blocks with at least two members}. The 0/1
loading matrix ties each lower-triangle position to its block pair; its
pseudo-inverse is block-pair averaging.

Determinant, inverse, and quadratic forms of block correlation matrices are
available in closed form through the b x b companion matrix with entries
a_ii = 1 + (p_i - 1) rho_ii and a_ij = rho_ij sqrt(p_i p_j); the remaining
spectrum consists of (1 - rho_ii) with multiplicity p_i - 1. These routines
cost O(p + b^3) instead of O(p^3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .corrmap import FP_MAX_ITER, FP_TOL, PD_RTOL, _lower_indices
from .errors import DimensionError, DomainError, NumericalError


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous grouping of p assets into b blocks of given sizes."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0 or any(s < 1 for s in sizes):
            raise DimensionError(f"block sizes must be positive, got {self.sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def b(self) -> int:
        return len(self.sizes)

    @property
    def p(self) -> int:
        return sum(self.sizes)

    @property
    def d(self) -> int:
        return self.p * (self.p - 1) // 2

    @property
    def k(self) -> int:
        """Number of free correlation components under the block structure."""
        n_within = sum(1 for s in self.sizes if s >= 2)
        return self.b * (self.b - 1) // 2 + n_within

    @cached_property
    def starts(self) -> np.ndarray:
        out = np.concatenate([[0], np.cumsum(self.sizes)])
        out.setflags(write=False)
        return out

    @cached_property
    def block_of(self) -> np.ndarray:
        """Block index of each asset."""
        out = np.repeat(np.arange(self.b), self.sizes)
        out.setflags(write=False)
        return out

    @cached_property
    def indicator(self) -> np.ndarray:
        """(p, b) matrix of block membership indicators."""
        out = np.zeros((self.p, self.b))
        out[np.arange(self.p), self.block_of] = 1.0
        out.setflags(write=False)
        return out

    def block_slice(self, i: int) -> slice:
        return slice(int(self.starts[i]), int(self.starts[i + 1]))


@dataclass(frozen=True)
class Loading:
    """0/1 matrix tying correlation components to factor columns.

    ``a`` is (d, k) with exactly one 1 per row; disjoint column supports make
    the least-squares condensing map a per-column average. ``expand`` sends a
    k-vector to the full d-vector, ``condense`` is its left inverse.
    """

    a: np.ndarray
    partition: BlockPartition | None = None
    col_pairs: tuple[tuple[int, int], ...] = field(default=())

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def k(self) -> int:
        return self.a.shape[1]

    @cached_property
    def row_col(self) -> np.ndarray:
        """Column index of the single 1 in each row."""
        if self.d == 0:
            out = np.zeros(0, dtype=np.intp)
        else:
            out = np.argmax(self.a, axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def col_rows(self) -> tuple[np.ndarray, ...]:
        """Row index arrays, one per column."""
        out = tuple(np.flatnonzero(self.a[:, j]) for j in range(self.k))
        for arr in out:
            arr.setflags(write=False)
        return out

    def expand(self, z: np.ndarray) -> np.ndarray:
        """Map factor components to the full d-vector (batched over leading axes)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.k:
            raise DimensionError(
                f"expected trailing dimension {self.k}, got {z.shape[-1]}"
            )
        return z[..., self.row_col]

    def condense(self, y: np.ndarray) -> np.ndarray:
        """Average the d-vector within each column's support.

        The mean is computed as anchor + mean(deviations from anchor), which
        is exact when a column's entries are identical, so
        condense(expand(z)) == z bitwise.
        """
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.d:
            raise DimensionError(
                f"expected trailing dimension {self.d}, got {y.shape[-1]}"
            )
        out = np.empty(y.shape[:-1] + (self.k,))
        for j, idx in enumerate(self.col_rows):
            anchor = y[..., idx[0]]
            if idx.size == 1:
                out[..., j] = anchor
            else:
                dev = y[..., idx] - anchor[..., None]
                out[..., j] = anchor + dev.mean(axis=-1)
        return out


def loading_matrix(partition: BlockPartition) -> Loading:
    """Loading for a block partition.

    Columns are ordered: within-block components for blocks of size >= 2 in
    ascending block index, then between-block pairs (i, j), i > j, in
    column-major order of the lower triangle of the b x b block grid.
    ``col_pairs`` records the (i, j) block pair of each column (i == j for
    within columns).
    """
    p, b = partition.p, partition.b
    col_pairs: list[tuple[int, int]] = [
        (i, i) for i, s in enumerate(partition.sizes) if s >= 2
    ]
    col_pairs += [(i, j) for j in range(b) for i in range(j + 1, b)]
    col_of_pair = {pair: n for n, pair in enumerate(col_pairs)}

    rows, cols = _lower_indices(p)
    block_of = partition.block_of
    a = np.zeros((partition.d, len(col_pairs)))
    for n, (r, c) in enumerate(zip(rows, cols)):
        a[n, col_of_pair[(int(block_of[r]), int(block_of[c]))]] = 1.0
    return Loading(a, partition, tuple(col_pairs))


def identity_loading(p: int) -> Loading:
    """Loading of the unrestricted model: every component is its own column."""
    d = p * (p - 1) // 2
    return Loading(np.eye(d), None, ())


@dataclass
class BlockCorr:
    """Block correlation parameters: a partition and a b x b value matrix.

    ``rho[i, i]`` is the within correlation of block i (ignored for
    single-member blocks), ``rho[i, j]`` the between correlation of blocks i
    and j.
    """

    partition: BlockPartition
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        b = self.partition.b
        if self.rho.shape != (b, b):
            raise DimensionError(
                f"rho must be ({b}, {b}), got {self.rho.shape}"
            )
        if np.max(np.abs(self.rho - self.rho.T)) > 0.0:
            self.rho = (self.rho + self.rho.T) / 2.0


def companion(bc: BlockCorr) -> np.ndarray:
    """The b x b matrix carrying the non-trivial spectrum of a block correlation."""
    sizes = np.asarray(bc.partition.sizes, dtype=float)
    a = bc.rho * np.sqrt(np.outer(sizes, sizes))
    np.fill_diagonal(a, 1.0 + (sizes - 1.0) * np.diag(bc.rho))
    return a


def is_valid_block(bc: BlockCorr) -> bool:
    """True when the implied dense correlation matrix is positive definite.

    The spectrum of the dense matrix is the companion spectrum plus
    (1 - rho_ii) with multiplicity p_i - 1, so validity is: companion PD and
    rho_ii < 1 for every block with two or more members.
    """
    sizes = np.asarray(bc.partition.sizes)
    within = np.diag(bc.rho)[sizes >= 2]
    if within.size and np.max(within) >= 1.0:
        return False
    w = np.linalg.eigvalsh(companion(bc))
    return bool(w[-1] > 0.0 and w[0] > PD_RTOL * w[-1])


def _require_valid(bc: BlockCorr) -> None:
    if not is_valid_block(bc):
        raise DomainError(
            "block correlation parameters do not define a positive definite matrix"
        )


def block_logdet(bc: BlockCorr) -> float:
    """log det of the dense block correlation matrix, in O(b^3)."""
    _require_valid(bc)
    sizes = np.asarray(bc.partition.sizes, dtype=float)
    sign, ld = np.linalg.slogdet(companion(bc))
    within = np.diag(bc.rho)
    extra = np.sum((sizes - 1.0) * np.log1p(-within, where=sizes >= 2)
                   * (sizes >= 2))
    return float(ld + extra)


@dataclass
class BlockMatrix:
    """Compact symmetric matrix with block structure.

    Block (i, j) equals ``ones_coef[i, j]`` times the all-ones block, plus,
    on the diagonal, ``eye_coef[i]`` times the identity.
    """

    partition: BlockPartition
    eye_coef: np.ndarray
    ones_coef: np.ndarray

    def to_dense(self) -> np.ndarray:
        part = self.partition
        out = np.repeat(
            np.repeat(self.ones_coef, part.sizes, axis=0), part.sizes, axis=1
        )
        out[np.diag_indices(part.p)] += np.repeat(self.eye_coef, part.sizes)
        return out


def block_inverse(bc: BlockCorr) -> BlockMatrix:
    """Inverse of a block correlation matrix in compact form.

    The inverse has the same block structure: its (i, j) block is
    a^#_ij / sqrt(p_i p_j) times ones, plus 1/(1 - rho_ii) times
    (I - ones/p_i) on the diagonal, where a^# is the companion inverse.
    """
    _require_valid(bc)
    part = bc.partition
    sizes = np.asarray(part.sizes, dtype=float)
    comp_inv = np.linalg.inv(companion(bc))
    scale = np.sqrt(np.outer(sizes, sizes))
    ones_coef = comp_inv / scale
    eye_coef = np.zeros(part.b)
    multi = sizes >= 2
    within = np.diag(bc.rho)
    eye_coef[multi] = 1.0 / (1.0 - within[multi])
    ones_coef = ones_coef.copy()
    diag = np.diag(ones_coef) - eye_coef / sizes
    ones_coef[np.diag_indices(part.b)] = diag
    return BlockMatrix(part, eye_coef, ones_coef)


def block_quadform(bc: BlockCorr, z: np.ndarray) -> float:
    """z' C^{-1} z for a block correlation C, in O(p + b^3)."""
    _require_valid(bc)
    part = bc.partition
    z = np.asarray(z, dtype=float).ravel()
    if z.size != part.p:
        raise DimensionError(f"expected a length-{part.p} vector, got {z.size}")
    sizes = np.asarray(part.sizes, dtype=float)
    s = np.add.reduceat(z, part.starts[:-1])
    q2 = np.add.reduceat(z * z, part.starts[:-1])
    s_tilde = s / np.sqrt(sizes)
    quad = float(s_tilde @ np.linalg.solve(companion(bc), s_tilde))
    multi = sizes >= 2
    if multi.any():
        within = np.diag(bc.rho)[multi]
        quad += float(
            np.sum((q2[multi] - s[multi] ** 2 / sizes[multi]) / (1.0 - within))
        )
    return quad


def block_corr_to_dense(bc: BlockCorr) -> np.ndarray:
    """Materialize the dense p x p block correlation matrix."""
    part = bc.partition
    out = np.repeat(np.repeat(bc.rho, part.sizes, axis=0), part.sizes, axis=1)
    out[np.diag_indices(part.p)] = 1.0
    return out


def block_corr_from_dense(c: np.ndarray, partition: BlockPartition) -> BlockCorr:
    """Read block parameters off a dense matrix by block-pair averaging."""
    c = np.asarray(c, dtype=float)
    if c.shape != (partition.p, partition.p):
        raise DimensionError(
            f"expected shape ({partition.p}, {partition.p}), got {c.shape}"
        )
    rho = extract_block_means(c[None], partition)[0]
    return BlockCorr(partition, rho)


@dataclass(frozen=True)
class _PairIndices:
    """Flat index arrays of each block pair's entries in a dense matrix."""

    within: tuple  # (block, rows, cols) for blocks with >= 2 members
    between: tuple  # (i, j, rows, cols) for i > j


def _pair_indices(partition: BlockPartition) -> _PairIndices:
    starts = partition.starts
    within = []
    for i, s in enumerate(partition.sizes):
        if s >= 2:
            r, c = np.tril_indices(s, k=-1)
            within.append((i, r + starts[i], c + starts[i]))
    between = []
    for j in range(partition.b):
        for i in range(j + 1, partition.b):
            ri = np.arange(starts[i], starts[i + 1])
            cj = np.arange(starts[j], starts[j + 1])
            rr = np.repeat(ri, cj.size)
            cc = np.tile(cj, ri.size)
            between.append((i, j, rr, cc))
    return _PairIndices(tuple(within), tuple(between))


_PAIR_CACHE: dict[tuple[int, ...], _PairIndices] = {}


def _pairs_for(partition: BlockPartition) -> _PairIndices:
    key = partition.sizes
    if key not in _PAIR_CACHE:
        _PAIR_CACHE[key] = _pair_indices(partition)
    return _PAIR_CACHE[key]


def extract_block_means(
    c_many: np.ndarray, partition: BlockPartition
) -> np.ndarray:
    """Per-matrix block-pair averages of a (T, p, p) stack.

    Returns a (T, b, b) symmetric array; single-member blocks get zero on
    the diagonal. Uses anchored means, exact on constant blocks.
    """
    c_many = np.asarray(c_many, dtype=float)
    t = c_many.shape[0]
    rho = np.zeros((t, partition.b, partition.b))
    pairs = _pairs_for(partition)
    for i, rr, cc in pairs.within:
        vals = c_many[:, rr, cc]
        anchor = vals[:, 0]
        rho[:, i, i] = anchor + (vals - anchor[:, None]).mean(axis=1)
    for i, j, rr, cc in pairs.between:
        vals = c_many[:, rr, cc]
        anchor = vals[:, 0]
        rho[:, i, j] = rho[:, j, i] = anchor + (vals - anchor[:, None]).mean(axis=1)
    return rho


def _companion_many(rho_many: np.ndarray, partition: BlockPartition) -> np.ndarray:
    sizes = np.asarray(partition.sizes, dtype=float)
    comp = rho_many * np.sqrt(np.outer(sizes, sizes))[None]
    ar = np.arange(partition.b)
    comp[:, ar, ar] = 1.0 + (sizes - 1.0)[None] * rho_many[:, ar, ar]
    return comp


def block_logdet_many(
    rho_many: np.ndarray, partition: BlockPartition
) -> np.ndarray:
    """Batched log-determinants from (T, b, b) block parameters."""
    rho_many = np.asarray(rho_many, dtype=float)
    sizes = np.asarray(partition.sizes, dtype=float)
    ar = np.arange(partition.b)
    within = rho_many[:, ar, ar]
    multi = sizes >= 2
    if multi.any() and np.max(within[:, multi]) >= 1.0:
        raise DomainError("within-block correlation at or above one")
    sign, ld = np.linalg.slogdet(_companion_many(rho_many, partition))
    if np.any(sign <= 0.0):
        raise DomainError("block companion matrix is not positive definite")
    if multi.any():
        ld = ld + np.log1p(-within[:, multi]) @ (sizes[multi] - 1.0)
    return ld


def block_quadform_many(
    rho_many: np.ndarray, z_many: np.ndarray, partition: BlockPartition
) -> np.ndarray:
    """Batched z' C^{-1} z from (T, b, b) block parameters and (T, p) vectors."""
    rho_many = np.asarray(rho_many, dtype=float)
    z_many = np.asarray(z_many, dtype=float)
    sizes = np.asarray(partition.sizes, dtype=float)
    ind = partition.indicator
    s = z_many @ ind
    q2 = (z_many * z_many) @ ind
    s_tilde = s / np.sqrt(sizes)[None]
    comp = _companion_many(rho_many, partition)
    w = np.linalg.solve(comp, s_tilde[..., None])[..., 0]
    quad = np.einsum("tb,tb->t", s_tilde, w)
    multi = sizes >= 2
    if multi.any():
        ar = np.arange(partition.b)
        within = rho_many[:, ar, ar][:, multi]
        if np.max(within) >= 1.0:
            raise DomainError("within-block correlation at or above one")
        resid = q2[:, multi] - s[:, multi] ** 2 / sizes[multi][None]
        quad = quad + (resid / (1.0 - within)).sum(axis=1)
    return quad


def _exp_symmetric_many(q: np.ndarray) -> np.ndarray:
    """Batched matrix exponential of symmetric (T, b, b) stacks.

    Closed forms avoid LAPACK for b <= 2: a 1x1 block is a scalar exp, and
    exp of a symmetric 2x2 M is exp(mu) (cosh(s) I + sinh(s)/s (M - mu I))
    with mu the mean eigenvalue and s the eigenvalue half-spread.
    """
    b = q.shape[-1]
    if b == 1:
        return np.exp(q)
    if b == 2:
        mu = 0.5 * (q[:, 0, 0] + q[:, 1, 1])
        dd = 0.5 * (q[:, 0, 0] - q[:, 1, 1])
        s = np.hypot(dd, q[:, 0, 1])
        safe = np.where(s < 1e-12, 1.0, s)
        sc = np.where(s < 1e-12, 1.0, np.sinh(safe) / safe)
        emu = np.exp(mu)
        out = np.empty_like(q)
        out[:, 0, 0] = emu * (np.cosh(s) + sc * dd)
        out[:, 1, 1] = emu * (np.cosh(s) - sc * dd)
        out[:, 0, 1] = out[:, 1, 0] = emu * sc * q[:, 0, 1]
        return out
    w, vecs = np.linalg.eigh(q)
    return np.einsum("nij,nj,nkj->nik", vecs, np.exp(w), vecs)


def block_vec_to_corr_many(
    zeta: np.ndarray,
    loading: Loading,
    tol: float = FP_TOL,
    max_iter: int = FP_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched inverse correlation transform in the block algebra.

    For a block loading the symmetric matrix built from the transformed
    vector is block-structured, and that structure is preserved by every
    step of the fixed-point iteration, so the whole computation reduces to
    the b-dimensional companion space: a block matrix with diagonal x_i,
    within value o_i and between values o_ij acts as the companion matrix
    Q (Q_ii = x_i + (p_i - 1) o_i, Q_ij = o_ij sqrt(p_i p_j)) on the block
    indicator span plus the scalar x_i - o_i on each block's complement.

    Returns ``(corr, log_diag, block_means)``: the (T, p, p) correlation
    stack with unit diagonal, the (T, p) converged log-diagonal (rows sum
    to log det C), and the (T, b, b) block values with zeros on
    single-member diagonals. Agrees with the general dense map up to
    roundoff.
    """
    if loading.partition is None:
        raise DimensionError("loading has no block partition")
    partition = loading.partition
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    if zeta.shape[1] != loading.k:
        raise DimensionError(
            f"expected {loading.k} components, got {zeta.shape[1]}"
        )
    t_len = zeta.shape[0]
    b = partition.b
    sizes = np.asarray(partition.sizes, dtype=float)
    multi = sizes >= 2.0

    o_within = np.zeros((t_len, b))
    q_fixed = np.zeros((t_len, b, b))
    for col, (i, j) in enumerate(loading.col_pairs):
        if i == j:
            o_within[:, i] = zeta[:, col]
        else:
            val = zeta[:, col] * np.sqrt(sizes[i] * sizes[j])
            q_fixed[:, i, j] = q_fixed[:, j, i] = val

    ar = np.arange(b)
    x = np.zeros((t_len, b))
    for _ in range(max_iter):
        q = q_fixed.copy()
        q[:, ar, ar] = x + (sizes - 1.0) * o_within
        e_comp = _exp_symmetric_many(q)
        e_lam = np.exp(x - o_within)
        diag = e_comp[:, ar, ar] / sizes + e_lam * (1.0 - 1.0 / sizes)
        if np.max(np.abs(diag - 1.0)) < tol:
            break
        x = x - np.log(diag)
    else:
        raise NumericalError(
            "correlation transform inversion did not converge: "
            f"residual {np.max(np.abs(diag - 1.0)):.3e} after {max_iter} "
            "iterations"
        )

    block_means = e_comp / np.sqrt(np.outer(sizes, sizes))[None]
    block_means[:, ar, ar] = np.where(
        multi, (e_comp[:, ar, ar] - e_lam) / sizes, 0.0
    )
    block_of = partition.block_of
    corr = block_means[:, block_of][:, :, block_of]
    idx = np.arange(partition.p)
    corr[:, idx, idx] = 1.0
    log_diag = x[:, block_of]
    return corr, log_diag, block_means
