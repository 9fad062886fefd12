"""Block-tridiagonal and arrowhead saddle point systems.

Blocks are stored unsigned; assembly applies the alternating sign pattern
(-1)**(i-1) to the diagonal of the tridiagonal form.  The three-block
tridiagonal system is permutation-equivalent to an arrowhead system whose
corner carries the (negated) middle block; ``permute_threeblock`` performs
that reordering exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dense
from .sparse import read_matrix_market, write_matrix_market, CsrMatrix


class GenerationError(RuntimeError):
    """Random system generation exhausted its retry budget."""


# generated systems must carry a well-conditioned Schur chain, otherwise
# roundoff in the downstream identity checks swamps their tolerances
CHAIN_CONDITION_LIMIT = 1e4


class ManifestError(ValueError):
    """Malformed block manifest; carries the offending line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _freeze(a):
    m = dense.as_matrix(a).copy()
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class BlockTridiagonalSystem:
    """Blocks of the n-tuple block-tridiagonal form.

    diag[i] is the unsigned diagonal block A_{i+1}; the assembled matrix
    carries (-1)**i * diag[i].  upper[i] sits on the superdiagonal and
    lower[i] on the subdiagonal.
    """

    diag: tuple
    upper: tuple
    lower: tuple

    def __post_init__(self):
        object.__setattr__(self, "diag", tuple(_freeze(a) for a in self.diag))
        object.__setattr__(self, "upper", tuple(_freeze(a) for a in self.upper))
        object.__setattr__(self, "lower", tuple(_freeze(a) for a in self.lower))
        n = len(self.diag)
        if n < 2:
            raise ValueError("need at least two diagonal blocks")
        if len(self.upper) != n - 1 or len(self.lower) != n - 1:
            raise ValueError("need n-1 upper and lower blocks")
        sizes = []
        for i, a in enumerate(self.diag):
            if a.shape[0] != a.shape[1]:
                raise ValueError(f"diagonal block {i + 1} is not square")
            sizes.append(a.shape[0])
        for i in range(n - 1):
            if self.upper[i].shape != (sizes[i], sizes[i + 1]):
                raise ValueError(
                    f"upper block {i + 1} has shape {self.upper[i].shape}, "
                    f"expected {(sizes[i], sizes[i + 1])}"
                )
            if self.lower[i].shape != (sizes[i + 1], sizes[i]):
                raise ValueError(
                    f"lower block {i + 1} has shape {self.lower[i].shape}, "
                    f"expected {(sizes[i + 1], sizes[i])}"
                )

    @property
    def n(self):
        return len(self.diag)

    @property
    def sizes(self):
        return tuple(a.shape[0] for a in self.diag)

    @property
    def total_size(self):
        return sum(self.sizes)


@dataclass(frozen=True)
class ArrowheadSystem:
    """Block-diagonal leading part bordered by a dense last block row/column.

    Signs are explicit so that both the alternating domain-decomposition
    layout and the permuted three-block layout (leading signs +,+ and
    corner -A_2) fit one type.  Defaults follow the alternating layout:
    leading sign (-1)**i, corner sign (-1)**m for m leading blocks.
    """

    leading: tuple
    border_rows: tuple
    border_cols: tuple
    corner: np.ndarray
    leading_signs: tuple = None
    corner_sign: int = None

    def __post_init__(self):
        object.__setattr__(self, "leading", tuple(_freeze(a) for a in self.leading))
        object.__setattr__(self, "border_rows",
                           tuple(_freeze(a) for a in self.border_rows))
        object.__setattr__(self, "border_cols",
                           tuple(_freeze(a) for a in self.border_cols))
        object.__setattr__(self, "corner", _freeze(self.corner))
        m = len(self.leading)
        if m < 1:
            raise ValueError("need at least one leading block")
        if self.leading_signs is None:
            object.__setattr__(self, "leading_signs",
                               tuple((-1) ** i for i in range(m)))
        if self.corner_sign is None:
            object.__setattr__(self, "corner_sign", (-1) ** m)
        if len(self.leading_signs) != m:
            raise ValueError("leading_signs length mismatch")
        if len(self.border_rows) != m or len(self.border_cols) != m:
            raise ValueError("need one border row and column per leading block")
        mc = self.corner.shape[0]
        if self.corner.shape != (mc, mc):
            raise ValueError("corner block must be square")
        for i, a in enumerate(self.leading):
            if a.shape[0] != a.shape[1]:
                raise ValueError(f"leading block {i + 1} is not square")
            if self.border_rows[i].shape != (mc, a.shape[0]):
                raise ValueError(f"border row {i + 1} has wrong shape")
            if self.border_cols[i].shape != (a.shape[0], mc):
                raise ValueError(f"border column {i + 1} has wrong shape")

    @property
    def m(self):
        return len(self.leading)

    @property
    def leading_sizes(self):
        return tuple(a.shape[0] for a in self.leading)

    @property
    def corner_size(self):
        return self.corner.shape[0]

    @property
    def total_size(self):
        return sum(self.leading_sizes) + self.corner_size


@dataclass(frozen=True)
class SystemOptions:
    """Knobs for seeded random system generation.

    zero_tail zeroes every diagonal block past the first (sizes must then
    be nonincreasing so the Schur chain stays invertible); zero_middle
    zeroes only the second block of a three-block system, the hypothesis
    under which the additive block-diagonal preconditioners have their
    short polynomials.
    """

    seed: int
    sizes: tuple
    zero_tail: bool = False
    symmetric_spd: bool = False
    zero_middle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2:
            raise ValueError("need at least two block sizes")
        if any(s < 1 for s in self.sizes):
            raise ValueError("block sizes must be >= 1")
        if self.zero_tail and any(
            self.sizes[i] < self.sizes[i + 1] for i in range(len(self.sizes) - 1)
        ):
            raise ValueError("zero_tail requires nonincreasing block sizes")
        if self.zero_middle:
            if len(self.sizes) != 3:
                raise ValueError("zero_middle applies to three-block systems")
            if self.sizes[1] > self.sizes[0]:
                raise ValueError("zero_middle requires sizes[1] <= sizes[0]")


def assemble(sys):
    """Monolithic dense matrix of a block-tridiagonal system."""
    sizes = sys.sizes
    offs = np.concatenate(([0], np.cumsum(sizes)))
    m = np.zeros((offs[-1], offs[-1]))
    for i, a in enumerate(sys.diag):
        s = offs[i]
        m[s:s + sizes[i], s:s + sizes[i]] = ((-1) ** i) * a
    for i in range(sys.n - 1):
        r, c = offs[i], offs[i + 1]
        m[r:r + sizes[i], c:c + sizes[i + 1]] = sys.upper[i]
        m[c:c + sizes[i + 1], r:r + sizes[i]] = sys.lower[i]
    return m


def assemble_arrowhead(sys):
    """Monolithic dense matrix of an arrowhead system."""
    sizes = sys.leading_sizes
    mc = sys.corner_size
    offs = np.concatenate(([0], np.cumsum(sizes)))
    tot = offs[-1] + mc
    m = np.zeros((tot, tot))
    for i, a in enumerate(sys.leading):
        s = offs[i]
        m[s:s + sizes[i], s:s + sizes[i]] = sys.leading_signs[i] * a
        m[offs[-1]:, s:s + sizes[i]] = sys.border_rows[i]
        m[s:s + sizes[i], offs[-1]:] = sys.border_cols[i]
    m[offs[-1]:, offs[-1]:] = sys.corner_sign * sys.corner
    return m


def permute_threeblock(sys):
    """Reorder a three-block tridiagonal system into arrowhead form.

    Returns the arrowhead system (leading A1, A3 with plus signs, corner
    -A2) and the symmetric permutation indices p such that
    assemble(sys)[p][:, p] equals the assembled arrowhead exactly.
    """
    if sys.n != 3:
        raise ValueError(f"expected a three-block system, got n={sys.n}")
    m1, m2, m3 = sys.sizes
    arrow = ArrowheadSystem(
        leading=(sys.diag[0], sys.diag[2]),
        border_rows=(sys.lower[0], sys.upper[1]),
        border_cols=(sys.upper[0], sys.lower[1]),
        corner=sys.diag[1],
        leading_signs=(1, 1),
        corner_sign=-1,
    )
    perm = np.concatenate([
        np.arange(m1),
        np.arange(m1 + m2, m1 + m2 + m3),
        np.arange(m1, m1 + m2),
    ])
    return arrow, perm


def random_system(opts):
    """Seeded random block-tridiagonal system honoring the option flags.

    Blocks are uniform(-1, 1); the first diagonal block gets a +size*I
    diagonal boost.  Generation retries with a derived seed until every
    Schur complement in the nested chain factors, at most 100 attempts.
    """
    for attempt in range(100):
        rng = np.random.default_rng((int(opts.seed), attempt))
        sys = _draw_system(rng, opts)
        if _chain_ok(sys):
            return sys
    raise GenerationError(
        f"no invertible Schur chain after 100 attempts (seed {opts.seed})"
    )


def _draw_system(rng, opts):
    sizes = opts.sizes
    n = len(sizes)
    diag = [rng.uniform(-1.0, 1.0, (s, s)) for s in sizes]
    upper = [rng.uniform(-1.0, 1.0, (sizes[i], sizes[i + 1])) for i in range(n - 1)]
    lower = [rng.uniform(-1.0, 1.0, (sizes[i + 1], sizes[i])) for i in range(n - 1)]
    if opts.symmetric_spd:
        for i, a in enumerate(diag):
            diag[i] = a @ a.T + sizes[i] * np.eye(sizes[i])
        lower = [bt.T for bt in upper]
    else:
        diag[0] = diag[0] + sizes[0] * np.eye(sizes[0])
    if opts.zero_tail:
        for i in range(1, n):
            diag[i] = np.zeros_like(diag[i])
    if opts.zero_middle:
        diag[1] = np.zeros_like(diag[1])
    return BlockTridiagonalSystem(diag=tuple(diag), upper=tuple(upper),
                                  lower=tuple(lower))


def _chain_ok(sys):
    # every nested Schur complement must pass the LU singularity check and
    # stay well conditioned (1-norm condition estimate via the inverse)
    try:
        s = np.asarray(sys.diag[0])
        f = dense.lu_factor(s)
        for i in range(sys.n):
            inv = dense.lu_solve(f, np.eye(s.shape[0]))
            cond = (np.abs(s).sum(axis=0).max()
                    * np.abs(inv).sum(axis=0).max())
            if cond > CHAIN_CONDITION_LIMIT:
                return False
            if i < sys.n - 1:
                s = sys.diag[i + 1] + sys.lower[i] @ dense.lu_solve(
                    f, sys.upper[i])
                f = dense.lu_factor(s)
    except dense.SingularMatrixError:
        return False
    return True


# ---------------------------------------------------------------------------
# manifest IO


def save_system(sys, directory):
    """Write one Matrix Market file per block plus a plain-text manifest.

    Manifest format: first line ``n=<count>``, then one line per block
    ``<role> <index> <filename>`` with role A (diagonal), B (superdiagonal,
    storing B_i^T as assembled) or C (subdiagonal).  Returns the manifest
    path.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"n={sys.n}"]
    for i, a in enumerate(sys.diag, start=1):
        name = f"A_{i}.mtx"
        write_matrix_market(d / name, a)
        lines.append(f"A {i} {name}")
    for i, b in enumerate(sys.upper, start=1):
        name = f"B_{i}.mtx"
        write_matrix_market(d / name, b)
        lines.append(f"B {i} {name}")
    for i, c in enumerate(sys.lower, start=1):
        name = f"C_{i}.mtx"
        write_matrix_market(d / name, c)
        lines.append(f"C {i} {name}")
    manifest = d / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="ascii")
    return manifest


def load_system(manifest_path):
    """Read a manifest written by save_system back into a system."""
    p = Path(manifest_path)
    text = p.read_text(encoding="ascii").splitlines()
    if not text:
        raise ManifestError(p, 1, "empty manifest")
    head = text[0].strip()
    if not head.startswith("n="):
        raise ManifestError(p, 1, f"expected n=<count>, got {head!r}")
    try:
        n = int(head[2:])
    except ValueError:
        raise ManifestError(p, 1, f"bad block count {head!r}") from None
    if n < 2:
        raise ManifestError(p, 1, f"block count must be >= 2, got {n}")
    entries = {}
    for ln, raw in enumerate(text[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ManifestError(p, ln, f"expected '<role> <i> <file>', got {line!r}")
        role, idx_s, name = parts
        if role not in ("A", "B", "C"):
            raise ManifestError(p, ln, f"unknown role {role!r}")
        try:
            idx = int(idx_s)
        except ValueError:
            raise ManifestError(p, ln, f"bad index {idx_s!r}") from None
        limit = n if role == "A" else n - 1
        if not 1 <= idx <= limit:
            raise ManifestError(p, ln, f"index {idx} out of range for role {role}")
        if (role, idx) in entries:
            raise ManifestError(p, ln, f"duplicate entry {role} {idx}")
        entries[(role, idx)] = (name, ln)
    blocks = {"A": [None] * n, "B": [None] * (n - 1), "C": [None] * (n - 1)}
    for role, count in (("A", n), ("B", n - 1), ("C", n - 1)):
        for idx in range(1, count + 1):
            if (role, idx) not in entries:
                raise ManifestError(p, 1, f"missing block {role} {idx}")
            name, ln = entries[(role, idx)]
            mat = read_matrix_market(p.parent / name)
            if isinstance(mat, CsrMatrix):
                mat = mat.to_dense()
            blocks[role][idx - 1] = mat
    try:
        return BlockTridiagonalSystem(diag=tuple(blocks["A"]),
                                      upper=tuple(blocks["B"]),
                                      lower=tuple(blocks["C"]))
    except ValueError as exc:
        raise ManifestError(p, 1, f"inconsistent block shapes: {exc}") from None
