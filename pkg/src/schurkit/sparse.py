"""Compressed sparse row matrices and the kernels the benchmark needs.

CSR construction from triplets (FEM assembly semantics: duplicates summed,
zeros dropped), matvec, drop-tolerance incomplete Cholesky with a diagonal
shift safety net, level-scheduled triangular solves, and Matrix Market IO.
All kernels are sequential / deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# asymmetry rejected above this (relative to max |entry|)
SYMMETRY_RTOL = 1e-12


class NotSymmetricError(ValueError):
    """Incomplete Cholesky was handed a matrix that is not symmetric."""


class CholeskyBreakdownError(RuntimeError):
    """Pivot stayed nonpositive after exhausting the diagonal-shift restarts."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content; carries the offending line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class CsrMatrix:
    """Compressed sparse row matrix with float64 values.

    Invariants enforced on construction: row_offsets has length rows+1 and
    is monotone, column indices are strictly increasing within each row,
    and all values are finite.
    """

    __slots__ = ("rows", "cols", "row_offsets", "col_indices", "values", "_rowidx")

    def __init__(self, rows, cols, row_offsets, col_indices, values):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(col_indices, dtype=np.int64)
        self.values = np.asarray(values, dtype=float)
        self._rowidx = None
        ro = self.row_offsets
        if ro.shape != (self.rows + 1,):
            raise ValueError("row_offsets must have length rows+1")
        if ro[0] != 0 or (np.diff(ro) < 0).any():
            raise ValueError("row_offsets must be monotone starting at 0")
        nnz = int(ro[-1])
        if self.col_indices.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_indices/values length must equal nnz")
        if nnz:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.cols:
                raise ValueError("column index out of range")
            if not np.isfinite(self.values).all():
                raise ValueError("values must be finite")
            inner = np.diff(self.col_indices)
            starts = np.zeros(nnz, dtype=bool)
            starts[ro[:-1][ro[:-1] < nnz]] = True
            if (inner[~starts[1:]] <= 0).any():
                raise ValueError("column indices must be strictly increasing per row")

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    @property
    def shape(self):
        return (self.rows, self.cols)

    def _row_index(self):
        if self._rowidx is None:
            self._rowidx = np.repeat(
                np.arange(self.rows, dtype=np.int64), np.diff(self.row_offsets)
            )
        return self._rowidx

    def to_dense(self):
        d = np.zeros((self.rows, self.cols))
        d[self._row_index(), self.col_indices] = self.values
        return d

    def diagonal(self):
        d = np.zeros(min(self.rows, self.cols))
        idx = self._row_index()
        on_diag = self.col_indices == idx
        d[self.col_indices[on_diag]] = self.values[on_diag]
        return d


def csr_from_triplets(rows, cols, triplets):
    """Assemble a CsrMatrix from (i, j, value) triples.

    Duplicate (i, j) entries are summed; entries that sum to exactly zero
    are dropped.  Raises IndexError for out-of-range indices.
    """
    rows = int(rows)
    cols = int(cols)
    t = list(triplets) if not isinstance(triplets, tuple) else triplets
    if isinstance(t, tuple) and len(t) == 3:
        ii, jj, vv = t
    elif len(t) == 0:
        ii = jj = np.empty(0, dtype=np.int64)
        vv = np.empty(0)
    else:
        arr = np.asarray(t, dtype=float)
        ii, jj, vv = arr[:, 0], arr[:, 1], arr[:, 2]
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    vv = np.asarray(vv, dtype=float)
    if ii.size and (ii.min() < 0 or ii.max() >= rows or jj.min() < 0 or jj.max() >= cols):
        raise IndexError("triplet index out of range")
    if ii.size:
        order = np.lexsort((jj, ii))
        ii, jj, vv = ii[order], jj[order], vv[order]
        key_change = np.empty(ii.size, dtype=bool)
        key_change[0] = True
        key_change[1:] = (ii[1:] != ii[:-1]) | (jj[1:] != jj[:-1])
        group = np.cumsum(key_change) - 1
        summed = np.bincount(group, weights=vv)
        ii = ii[key_change]
        jj = jj[key_change]
        vv = summed
        keep = vv != 0.0
        ii, jj, vv = ii[keep], jj[keep], vv[keep]
    offsets = np.zeros(rows + 1, dtype=np.int64)
    if ii.size:
        np.add.at(offsets, ii + 1, 1)
    offsets = np.cumsum(offsets)
    return CsrMatrix(rows, cols, offsets, jj, vv)


def csr_identity(n):
    return CsrMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))


def csr_zero(rows, cols):
    return CsrMatrix(rows, cols, np.zeros(rows + 1, dtype=np.int64),
                     np.empty(0, dtype=np.int64), np.empty(0))


def spmv(a, x):
    """y = A x for CSR A, computed row by row (deterministic)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (a.cols,):
        raise ValueError(f"vector length {x.shape} does not match cols={a.cols}")
    if a.nnz == 0:
        return np.zeros(a.rows)
    prods = a.values * x[a.col_indices]
    return np.bincount(a._row_index(), weights=prods, minlength=a.rows)


def csr_transpose(a):
    if a.nnz == 0:
        return csr_zero(a.cols, a.rows)
    order = np.lexsort((a._row_index(), a.col_indices))
    new_rows = a.col_indices[order]
    new_cols = a._row_index()[order]
    new_vals = a.values[order]
    offsets = np.zeros(a.cols + 1, dtype=np.int64)
    np.add.at(offsets, new_rows + 1, 1)
    return CsrMatrix(a.cols, a.rows, np.cumsum(offsets), new_cols, new_vals)


def csr_scale(a, s):
    return CsrMatrix(a.rows, a.cols, a.row_offsets.copy(), a.col_indices.copy(),
                     a.values * float(s))


def csr_add(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ii = np.concatenate([a._row_index(), b._row_index()])
    jj = np.concatenate([a.col_indices, b.col_indices])
    vv = np.concatenate([a.values, b.values])
    return csr_from_triplets(a.rows, a.cols, (ii, jj, vv))


def csr_submatrix(a, row_idx, col_idx):
    """Submatrix on the given (sorted) row and column index arrays."""
    row_idx = np.asarray(row_idx, dtype=np.int64)
    col_idx = np.asarray(col_idx, dtype=np.int64)
    colmap = np.full(a.cols, -1, dtype=np.int64)
    colmap[col_idx] = np.arange(col_idx.size)
    counts = np.diff(a.row_offsets)[row_idx]
    gather = np.concatenate(
        [np.arange(a.row_offsets[r], a.row_offsets[r + 1]) for r in row_idx]
    ) if row_idx.size else np.empty(0, dtype=np.int64)
    cols = colmap[a.col_indices[gather]]
    vals = a.values[gather]
    local_rows = np.repeat(np.arange(row_idx.size, dtype=np.int64), counts)
    keep = cols >= 0
    return csr_from_triplets(row_idx.size, col_idx.size,
                             (local_rows[keep], cols[keep], vals[keep]))


def csr_equal(a, b):
    return (a.shape == b.shape
            and np.array_equal(a.row_offsets, b.row_offsets)
            and np.array_equal(a.col_indices, b.col_indices)
            and np.array_equal(a.values, b.values))


# ---------------------------------------------------------------------------
# incomplete Cholesky


class _PivotBreakdown(Exception):
    pass


def _ict_columns(n, ro, ci, vv, shifted_diag, tau, sqrt_diag):
    """Left-looking column IC(tau).  Returns per-column rows/values arrays.

    Column j of L is accumulated in a dense work vector; previously built
    columns contribute through a linked list keyed by their next untouched
    row.  A fill value l_ij is kept only when |l_ij| >= tau*sqrt(a_ii*a_jj).
    """
    w = np.zeros(n)
    head = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    ptr = np.zeros(n, dtype=np.int64)
    col_rows = [None] * n
    col_vals = [None] * n
    diag_l = np.zeros(n)
    for j in range(n):
        s, e = ro[j], ro[j + 1]
        cj = ci[s:e]
        up = np.searchsorted(cj, j)
        rows_a = cj[up:]
        w[rows_a] = vv[s:e][up:]
        w[j] = shifted_diag[j]
        touched = [rows_a]
        k = head[j]
        while k != -1:
            knext = nxt[k]
            rk = col_rows[k]
            vk = col_vals[k]
            p = ptr[k]
            seg_r = rk[p:]
            w[seg_r] -= vk[p] * vk[p:]
            touched.append(seg_r)
            p += 1
            ptr[k] = p
            if p < rk.size:
                r = rk[p]
                nxt[k] = head[r]
                head[r] = k
            k = knext
        piv = w[j]
        if not piv > 0.0:
            for t in touched:
                w[t] = 0.0
            w[j] = 0.0
            raise _PivotBreakdown
        ljj = math.sqrt(piv)
        tr = np.unique(np.concatenate(touched)) if touched else np.empty(0, np.int64)
        tr = tr[tr > j]
        cand = w[tr] / ljj
        # only fill (entries outside the pattern of A) is subject to dropping
        in_pattern = np.isin(tr, rows_a, assume_unique=True)
        keep = ((np.abs(cand) >= tau * sqrt_diag[tr] * sqrt_diag[j]) | in_pattern) \
            & (cand != 0.0)
        w[tr] = 0.0
        w[j] = 0.0
        rows_j = tr[keep]
        col_rows[j] = rows_j
        col_vals[j] = cand[keep]
        diag_l[j] = ljj
        if rows_j.size:
            r = rows_j[0]
            nxt[j] = head[r]
            head[r] = j
            ptr[j] = 0
    return diag_l, col_rows, col_vals


def _tri_schedule(tri, lower):
    """Level schedule for a triangular CSR solve.

    Rows inside one level are mutually independent; each level solve is a
    gather / bincount / divide step.
    """
    n = tri.rows
    ro, ci, vv = tri.row_offsets, tri.col_indices, tri.values
    level = np.zeros(n, dtype=np.int64)
    if lower:
        order_rows = range(n)
    else:
        order_rows = range(n - 1, -1, -1)
    for i in order_rows:
        s, e = ro[i], ro[i + 1]
        deps = ci[s:e - 1] if lower else ci[s + 1:e]
        if deps.size:
            level[i] = level[deps].max() + 1
    nlev = int(level.max()) + 1 if n else 0
    perm = np.argsort(level, kind="stable")
    bounds = np.searchsorted(level[perm], np.arange(nlev + 1))
    levels = []
    for L in range(nlev):
        rows = perm[bounds[L]:bounds[L + 1]]
        segs = []
        locs = []
        diag = np.empty(rows.size)
        for loc, i in enumerate(rows):
            s, e = ro[i], ro[i + 1]
            if lower:
                segs.append(np.arange(s, e - 1))
                diag[loc] = vv[e - 1]
            else:
                segs.append(np.arange(s + 1, e))
                diag[loc] = vv[s]
            locs.append(np.full(segs[-1].size, loc, dtype=np.int64))
        gather = np.concatenate(segs) if segs else np.empty(0, np.int64)
        local = np.concatenate(locs) if locs else np.empty(0, np.int64)
        levels.append((rows, ci[gather], vv[gather], local, diag))
    return levels


def _tri_solve(levels, n, b):
    x = np.empty(n)
    for rows, cols, vals, local, diag in levels:
        if cols.size:
            contrib = np.bincount(local, weights=vals * x[cols], minlength=rows.size)
        else:
            contrib = 0.0
        x[rows] = (b[rows] - contrib) / diag
    return x


@dataclass
class IcFactor:
    """Incomplete Cholesky factor: A + shift*diag(A) ~ L L^T (pattern-limited)."""

    lower: CsrMatrix
    shift: float
    tau: float
    _fwd: list = field(repr=False, default=None)
    _bwd: list = field(repr=False, default=None)
    _upper: CsrMatrix = field(repr=False, default=None)

    def __post_init__(self):
        if self._upper is None:
            self._upper = csr_transpose(self.lower)
        if self._fwd is None:
            self._fwd = _tri_schedule(self.lower, lower=True)
        if self._bwd is None:
            self._bwd = _tri_schedule(self._upper, lower=False)

    @property
    def n(self):
        return self.lower.rows


def ichol(a, tau):
    """IC(tau) factorization of a symmetric positive definite CSR matrix.

    Symmetry is checked to SYMMETRY_RTOL (relative, max norm) and enforced
    by averaging with the transpose.  On a nonpositive pivot the whole
    factorization restarts with the diagonal shift doubled (floor 1e-3,
    relative to the diagonal), at most 20 restarts.
    """
    if a.rows != a.cols:
        raise ValueError("matrix must be square")
    if tau < 0:
        raise ValueError("drop tolerance must be >= 0")
    at = csr_transpose(a)
    diff = csr_add(a, csr_scale(at, -1.0))
    amax = float(np.abs(a.values).max()) if a.nnz else 0.0
    dmax = float(np.abs(diff.values).max()) if diff.nnz else 0.0
    if dmax > SYMMETRY_RTOL * amax:
        raise NotSymmetricError(
            f"asymmetry {dmax:.3e} exceeds {SYMMETRY_RTOL:.0e} * max|A| = "
            f"{SYMMETRY_RTOL * amax:.3e}"
        )
    sym = csr_scale(csr_add(a, at), 0.5)
    diag = sym.diagonal()
    if (diag <= 0).any():
        raise ValueError("diagonal must be strictly positive")
    sqrt_diag = np.sqrt(diag)
    shift = 0.0
    for _ in range(21):
        shifted = diag * (1.0 + shift)
        try:
            diag_l, col_rows, col_vals = _ict_columns(
                sym.rows, sym.row_offsets, sym.col_indices, sym.values,
                shifted, float(tau), sqrt_diag,
            )
        except _PivotBreakdown:
            shift = max(2.0 * shift, 1e-3)
            continue
        n = sym.rows
        ii = np.concatenate(
            [np.concatenate(([j], col_rows[j])) for j in range(n)]
        )
        jj = np.repeat(np.arange(n, dtype=np.int64),
                       [1 + col_rows[j].size for j in range(n)])
        vv = np.concatenate(
            [np.concatenate(([diag_l[j]], col_vals[j])) for j in range(n)]
        )
        lower = csr_from_triplets(n, n, (ii, jj, vv))
        return IcFactor(lower=lower, shift=shift, tau=float(tau))
    raise CholeskyBreakdownError(f"pivot breakdown persisted at shift {shift:.3e}")


def ic_solve(f, b):
    """Apply (L L^T)^{-1}: forward then backward triangular substitution."""
    b = np.asarray(b, dtype=float)
    if b.shape != (f.n,):
        raise ValueError(f"vector length {b.shape} does not match n={f.n}")
    y = _tri_solve(f._fwd, f.n, b)
    return _tri_solve(f._bwd, f.n, y)


# ---------------------------------------------------------------------------
# Matrix Market IO


def write_matrix_market(path, mat):
    """Write a CsrMatrix (coordinate format) or dense array (array format).

    Values are printed with 17 significant digits so that reading the file
    back reproduces the stored float64 values exactly.
    """
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        if isinstance(mat, CsrMatrix):
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{mat.rows} {mat.cols} {mat.nnz}\n")
            ridx = mat._row_index()
            for i, j, v in zip(ridx, mat.col_indices, mat.values):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
        else:
            m = np.asarray(mat, dtype=float)
            if m.ndim != 2:
                raise ValueError("expected a 2-D array")
            fh.write("%%MatrixMarket matrix array real general\n")
            fh.write(f"{m.shape[0]} {m.shape[1]}\n")
            for j in range(m.shape[1]):
                for i in range(m.shape[0]):
                    fh.write(f"{m[i, j]:.17g}\n")


def read_matrix_market(path):
    """Read a Matrix Market file; returns CsrMatrix or dense ndarray."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")
    header = lines[0].split()
    if len(header) < 4 or header[0] != "%%MatrixMarket" or header[1] != "matrix":
        raise MatrixMarketError(path, 1, "bad header")
    fmt = header[2]
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(path, 1, f"unsupported format {fmt!r}")
    ln = 1
    while ln < len(lines) and lines[ln].startswith("%"):
        ln += 1
    if ln >= len(lines):
        raise MatrixMarketError(path, ln + 1, "missing size line")
    size = lines[ln].split()
    if fmt == "coordinate":
        if len(size) != 3:
            raise MatrixMarketError(path, ln + 1, "size line needs rows cols nnz")
        try:
            rows, cols, nnz = (int(s) for s in size)
        except ValueError:
            raise MatrixMarketError(path, ln + 1, "bad size line") from None
        entries = lines[ln + 1:]
        if len(entries) < nnz:
            raise MatrixMarketError(path, len(lines) + 1,
                                    f"expected {nnz} entries, found {len(entries)}")
        ii = np.empty(nnz, dtype=np.int64)
        jj = np.empty(nnz, dtype=np.int64)
        vv = np.empty(nnz)
        for k in range(nnz):
            parts = entries[k].split()
            if len(parts) != 3:
                raise MatrixMarketError(path, ln + 2 + k, "entry needs i j value")
            try:
                ii[k] = int(parts[0]) - 1
                jj[k] = int(parts[1]) - 1
                vv[k] = float(parts[2])
            except ValueError:
                raise MatrixMarketError(path, ln + 2 + k, "bad entry") from None
        try:
            return csr_from_triplets(rows, cols, (ii, jj, vv))
        except IndexError:
            raise MatrixMarketError(path, ln + 1, "entry index out of range") from None
    if len(size) != 2:
        raise MatrixMarketError(path, ln + 1, "size line needs rows cols")
    try:
        rows, cols = (int(s) for s in size)
    except ValueError:
        raise MatrixMarketError(path, ln + 1, "bad size line") from None
    vals = lines[ln + 1:]
    if len(vals) < rows * cols:
        raise MatrixMarketError(path, len(lines) + 1,
                                f"expected {rows * cols} values, found {len(vals)}")
    m = np.empty((rows, cols))
    k = 0
    for j in range(cols):
        for i in range(rows):
            try:
                m[i, j] = float(vals[k])
            except ValueError:
                raise MatrixMarketError(path, ln + 2 + k, "bad value") from None
            k += 1
    return m
