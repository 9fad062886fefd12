"""Schur-complement chains and the block preconditioner families.

Two Schur constructions: the nested chain S_1 = A_1,
S_{i+1} = A_{i+1} + C_i S_i^{-1} B_i^T for block-tridiagonal systems, and
the additive complement S = A_c + sum_i C_i A_i^{-1} B_i^T for arrowhead
systems.  Every named preconditioner is a sign pattern over these blocks:
block-diagonal ones solve with delta_i * S_i, block-triangular ones add
gamma_i * C_i subdiagonal coupling.  Presets are data, not code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dense
from .blocks import ArrowheadSystem, BlockTridiagonalSystem, assemble, assemble_arrowhead

PRECOND_SIZE_LIMIT = 2000


class SingularSchurError(ValueError):
    """A Schur complement in the chain failed the LU singularity check."""

    def __init__(self, index, message=None):
        super().__init__(message or f"Schur complement S_{index} is singular")
        self.index = index


class SingularLeadingBlockError(ValueError):
    """A leading diagonal block of an arrowhead system is singular."""

    def __init__(self, index):
        super().__init__(f"leading block {index} is singular")
        self.index = index


class UnknownPresetError(ValueError):
    """Preconditioner preset name not in the registry."""


class MissingSolverError(ValueError):
    """A diagonal block has no solver attached."""

    def __init__(self, index):
        super().__init__(f"no solver for diagonal block {index}")
        self.index = index


@dataclass(frozen=True)
class SchurChain:
    """Nested Schur complements with their LU factorizations."""

    blocks: tuple
    factors: tuple

    @property
    def n(self):
        return len(self.blocks)


@dataclass(frozen=True)
class AdditiveSchur:
    """Additive Schur complement of an arrowhead system."""

    schur: np.ndarray
    factor: dense.LUFactors
    leading_factors: tuple


def nested_chain(sys):
    """Build S_1 .. S_n for a block-tridiagonal system.

    Raises SingularSchurError identifying the first S_i that fails the
    LU singularity check (1-based).
    """
    blocks = []
    factors = []
    s = np.array(sys.diag[0])
    for i in range(sys.n):
        try:
            f = dense.lu_factor(s)
        except dense.SingularMatrixError as exc:
            raise SingularSchurError(i + 1, f"S_{i + 1} is singular: {exc}") from exc
        blocks.append(s)
        factors.append(f)
        if i < sys.n - 1:
            s = sys.diag[i + 1] + sys.lower[i] @ dense.lu_solve(f, sys.upper[i])
    return SchurChain(blocks=tuple(blocks), factors=tuple(factors))


def additive_schur(sys):
    """Additive Schur complement of an arrowhead system.

    With the corner stored unsigned and assembled as corner_sign * corner,
    the complement is S = -corner_sign*corner + sum_i C_i (s_i A_i)^{-1} B_i^T
    over the signed leading blocks; for the permuted three-block layout
    (corner -A_2) this is A_2 + C_1 A_1^{-1} B_1^T + B_2^T A_3^{-1} C_2.
    """
    factors = []
    for i, (a, sg) in enumerate(zip(sys.leading, sys.leading_signs), start=1):
        try:
            factors.append(dense.lu_factor(sg * a))
        except dense.SingularMatrixError as exc:
            raise SingularLeadingBlockError(i) from exc
    s = -sys.corner_sign * np.array(sys.corner)
    for f, row, col in zip(factors, sys.border_rows, sys.border_cols):
        s = s + row @ dense.lu_solve(f, col)
    try:
        sf = dense.lu_factor(s)
    except dense.SingularMatrixError as exc:
        raise SingularSchurError(len(sys.leading) + 1,
                                 f"additive Schur complement is singular: {exc}") from exc
    return AdditiveSchur(schur=s, factor=sf, leading_factors=tuple(factors))


# ---------------------------------------------------------------------------
# preconditioner operators


class Preconditioner:
    """Base class: an applicable approximate inverse with a block layout."""

    def __init__(self, sizes, tag=""):
        self.sizes = tuple(int(s) for s in sizes)
        self.offsets = np.concatenate(([0], np.cumsum(self.sizes)))
        self.dim = int(self.offsets[-1])
        self.tag = tag

    def _split(self, v):
        return [v[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.sizes))]

    def apply(self, v):
        raise NotImplementedError


class IdentityPreconditioner(Preconditioner):
    def __init__(self, dim):
        super().__init__((dim,), tag="identity")

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"vector length {v.shape} does not match dim={self.dim}")
        return v.copy()


class BlockDiagonalPreconditioner(Preconditioner):
    """Independent signed block solves: y_i = delta_i * solve_i(v_i)."""

    def __init__(self, sizes, solves, diag_signs, tag=""):
        super().__init__(sizes, tag)
        _check_solves(solves, len(self.sizes))
        if len(diag_signs) != len(self.sizes):
            raise ValueError("one sign per diagonal block required")
        self.solves = tuple(solves)
        self.diag_signs = tuple(int(s) for s in diag_signs)

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"vector length {v.shape} does not match dim={self.dim}")
        parts = self._split(v)
        out = [sg * solve(p) for sg, solve, p in zip(self.diag_signs, self.solves, parts)]
        return np.concatenate(out)


class BlockTriangularPreconditioner(Preconditioner):
    """Block forward substitution with signed diagonal and subdiagonal.

    y_1 = delta_1 solve_1(v_1);
    y_i = delta_i solve_i(v_i - gamma_{i-1} C_{i-1} y_{i-1}).
    """

    def __init__(self, sizes, solves, diag_signs, sub_matvecs, sub_signs, tag=""):
        super().__init__(sizes, tag)
        nb = len(self.sizes)
        _check_solves(solves, nb)
        if len(diag_signs) != nb:
            raise ValueError("one sign per diagonal block required")
        if len(sub_matvecs) != nb - 1 or len(sub_signs) != nb - 1:
            raise ValueError("need n-1 subdiagonal couplings and signs")
        self.solves = tuple(solves)
        self.diag_signs = tuple(int(s) for s in diag_signs)
        self.sub_matvecs = tuple(sub_matvecs)
        self.sub_signs = tuple(int(s) for s in sub_signs)

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"vector length {v.shape} does not match dim={self.dim}")
        parts = self._split(v)
        out = [self.diag_signs[0] * self.solves[0](parts[0])]
        for i in range(1, len(self.sizes)):
            rhs = parts[i] - self.sub_signs[i - 1] * self.sub_matvecs[i - 1](out[i - 1])
            out.append(self.diag_signs[i] * self.solves[i](rhs))
        return np.concatenate(out)


def _check_solves(solves, n):
    if solves is None or len(solves) != n:
        raise MissingSolverError(len(solves) + 1 if solves else 1)
    for i, s in enumerate(solves, start=1):
        if s is None:
            raise MissingSolverError(i)


# ---------------------------------------------------------------------------
# presets

# nested triangular: name -> (diag signs, subdiagonal signs)
_TRIANGULAR = {
    "P1": ((1, -1, 1), (1, 1)),
    "P2": ((1, 1, 1), (1, -1)),
    "P3": ((1, 1, -1), (1, -1)),
    "P4": ((1, -1, -1), (1, 1)),
}

# nested diagonal: name -> diag signs
_DIAGONAL = {
    "PD1": (1, 1, 1),
    "PD2": (1, 1, -1),
    "PD3": (1, -1, 1),
    "PD4": (1, -1, -1),
}

# additive: name -> (family, corner sign in the preconditioner)
_ADDITIVE = {
    "Q1": ("triangular", -1),
    "Q2": ("triangular", 1),
    "QD1": ("diagonal", 1),
    "QD2": ("diagonal", -1),
}

NESTED_PRESETS = ("P1", "P2", "P3", "P4", "PD1", "PD2", "PD3", "PD4", "Pn", "Dn", "Mn")
ADDITIVE_PRESETS = ("Q1", "Q2", "QD1", "QD2")
PRESET_NAMES = NESTED_PRESETS + ADDITIVE_PRESETS


def preset_pattern(name, n=3):
    """Resolve a preset name to (family, diag_signs, sub_signs).

    family is one of 'triangular', 'diagonal', 'additive-triangular',
    'additive-diagonal'.  For additive families diag_signs covers the two
    blocks (leading aggregate, Schur corner) and sub_signs the single
    coupling.
    """
    if name in _TRIANGULAR:
        if n != 3:
            raise UnknownPresetError(f"{name} is a three-block preset, got n={n}")
        d, g = _TRIANGULAR[name]
        return "triangular", d, g
    if name in _DIAGONAL:
        if n != 3:
            raise UnknownPresetError(f"{name} is a three-block preset, got n={n}")
        return "diagonal", _DIAGONAL[name], ()
    if name == "Pn":
        return "triangular", tuple((-1) ** i for i in range(n)), (1,) * (n - 1)
    if name == "Dn":
        return "diagonal", tuple((-1) ** i for i in range(n)), ()
    if name == "Mn":
        return "diagonal", (1,) * n, ()
    if name in _ADDITIVE:
        family, corner = _ADDITIVE[name]
        return (f"additive-{family}", (1, corner),
                (1,) if family == "triangular" else ())
    raise UnknownPresetError(f"unknown preconditioner preset {name!r}")


def _lu_solver(f):
    return lambda v: dense.lu_solve(f, v)


def _matvec(c):
    m = np.asarray(c, dtype=float)
    return lambda v: m @ v


def _blockdiag_solver(factors, sizes):
    offsets = np.concatenate(([0], np.cumsum(sizes)))

    def solve(v):
        return np.concatenate([
            dense.lu_solve(f, v[offsets[i]:offsets[i + 1]])
            for i, f in enumerate(factors)
        ])

    return solve


def _border_matvec(border_rows, sizes):
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    mats = [np.asarray(r, dtype=float) for r in border_rows]

    def mv(v):
        out = mats[0] @ v[offsets[0]:offsets[1]]
        for i in range(1, len(mats)):
            out = out + mats[i] @ v[offsets[i]:offsets[i + 1]]
        return out

    return mv


def make_preconditioner(name, system=None, schur=None, *, sizes=None,
                        solves=None, sub_matvecs=None, n=None):
    """Instantiate a named preconditioner preset.

    Exact mode: pass the system together with its SchurChain (nested
    presets) or AdditiveSchur (Q presets); solvers come from the stored LU
    factors.  Inexact mode: pass sizes plus per-block solve callables (and
    subdiagonal matvecs for triangular families).
    """
    if system is not None:
        if isinstance(system, BlockTridiagonalSystem):
            n = system.n
        elif isinstance(system, ArrowheadSystem):
            n = 2
        else:
            raise TypeError(f"unsupported system type {type(system).__name__}")
    elif n is None:
        if sizes is None:
            raise ValueError("need a system, or sizes for inexact mode")
        n = len(sizes)
    family, diag_signs, sub_signs = preset_pattern(name, n=n)

    if family.startswith("additive"):
        if system is not None:
            if not isinstance(system, ArrowheadSystem):
                raise TypeError(f"{name} needs an arrowhead system")
            if schur is None:
                schur = additive_schur(system)
            lead_sizes = system.leading_sizes
            sizes = (sum(lead_sizes), system.corner_size)
            solves = (
                _blockdiag_solver(schur.leading_factors, lead_sizes),
                _lu_solver(schur.factor),
            )
            sub_matvecs = (_border_matvec(system.border_rows, lead_sizes),)
        if sizes is None or len(sizes) != 2:
            raise ValueError(f"{name} needs two block sizes (leading, corner)")
        if family == "additive-diagonal":
            return BlockDiagonalPreconditioner(sizes, solves, diag_signs, tag=name)
        if sub_matvecs is None or len(sub_matvecs) != 1:
            raise MissingSolverError(2)
        return BlockTriangularPreconditioner(
            sizes, solves, diag_signs, sub_matvecs, sub_signs, tag=name)

    if system is not None:
        if schur is None:
            schur = nested_chain(system)
        sizes = system.sizes
        solves = tuple(_lu_solver(f) for f in schur.factors)
        sub_matvecs = tuple(_matvec(c) for c in system.lower)
    if sizes is None:
        raise ValueError("need a system, or sizes for inexact mode")
    if family == "diagonal":
        return BlockDiagonalPreconditioner(sizes, solves, diag_signs, tag=name)
    if sub_matvecs is None or len(sub_matvecs) != len(sizes) - 1:
        raise MissingSolverError(len(sizes))
    return BlockTriangularPreconditioner(
        sizes, solves, diag_signs, sub_matvecs, sub_signs, tag=name)


def preconditioned_matrix(p, system):
    """Dense P^{-1} A, column by column (desk-scale guard applies)."""
    if isinstance(system, BlockTridiagonalSystem):
        a = assemble(system)
    elif isinstance(system, ArrowheadSystem):
        a = assemble_arrowhead(system)
    else:
        a = dense.as_square(system)
    n = a.shape[0]
    if n > PRECOND_SIZE_LIMIT:
        raise ValueError(f"size {n} exceeds desk-scale limit {PRECOND_SIZE_LIMIT}")
    if n != p.dim:
        raise ValueError(f"operator size {n} does not match preconditioner {p.dim}")
    t = np.empty((n, n))
    for j in range(n):
        t[:, j] = p.apply(a[:, j])
    return t


def build_ldu(sys, chain=None):
    """Block LDU factors of the assembled tridiagonal system.

    L is unit lower block-bidiagonal with (-1)**(i-1) C_i S_i^{-1} below
    the diagonal, D = diag((-1)**(i-1) S_i), U is unit upper with
    (-1)**(i-1) S_i^{-1} B_i^T.  assemble(sys) == L @ D @ U.
    """
    if chain is None:
        chain = nested_chain(sys)
    sizes = sys.sizes
    offs = np.concatenate(([0], np.cumsum(sizes)))
    tot = offs[-1]
    L = np.eye(tot)
    D = np.zeros((tot, tot))
    U = np.eye(tot)
    for i in range(sys.n):
        s = offs[i]
        D[s:s + sizes[i], s:s + sizes[i]] = ((-1) ** i) * chain.blocks[i]
    for i in range(sys.n - 1):
        r, c = offs[i], offs[i + 1]
        sign = (-1) ** i
        s_inv = dense.lu_solve(chain.factors[i], np.eye(sizes[i]))
        L[c:c + sizes[i + 1], r:r + sizes[i]] = sign * (sys.lower[i] @ s_inv)
        U[r:r + sizes[i], c:c + sizes[i + 1]] = sign * (s_inv @ sys.upper[i])
    return L, D, U
