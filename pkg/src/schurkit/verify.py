"""Spectral verification machinery for the preconditioner families.

Predicted minimal-polynomial factors per preset, the two polynomial
recurrences behind the n-block diagonal families, normalized annihilation
residuals, spectrum membership reports, positive-stability verdicts, and
Routh tables for the half-plane count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dense
from . import precond as pc
from .blocks import (SystemOptions, assemble, assemble_arrowhead,
                     permute_threeblock, random_system)

ANNIHILATION_TOL = 1e-9
MEMBERSHIP_TOL_COMPUTED = 1e-7
MEMBERSHIP_TOL_PRINTED = 1e-3
STABILITY_MARGIN = 1e-8
LDU_RTOL = 1e-11


class ZeroFirstColumnError(ValueError):
    """A Routh table hit a zero first-column entry; the tabular rule stops."""


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with ascending coefficients and nonzero lead."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if not c:
            raise ValueError("empty coefficient list")
        if c[-1] == 0.0 and len(c) > 1:
            raise ValueError("leading coefficient must be nonzero")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def monic(self):
        lead = self.coeffs[-1]
        return Polynomial(tuple(c / lead for c in self.coeffs))

    def __call__(self, x):
        r = 0.0
        for c in reversed(self.coeffs):
            r = r * x + c
        return r

    def at_matrix(self, t):
        return dense.mat_poly_eval(self.coeffs, t)

    def roots(self):
        if self.degree == 0:
            return []
        return dense.poly_roots(self.coeffs)

    def __str__(self):
        terms = []
        for k in range(self.degree, -1, -1):
            c = self.coeffs[k]
            if c == 0.0:
                continue
            mag = abs(c)
            piece = "" if (mag == 1.0 and k > 0) else f"{mag:g}"
            if k > 1:
                piece += f"x^{k}"
            elif k == 1:
                piece += "x"
            terms.append(("-" if c < 0 else "+", piece or "1"))
        if not terms:
            return "0"
        sign0, head = terms[0]
        out = ("-" if sign0 == "-" else "") + head
        for sign, piece in terms[1:]:
            out += f" {sign} {piece}"
        return out


def pbar_polynomials(n):
    """q_0 = 1, q_1 = x - 1, q_{i+1} = x*q_i + q_{i-1} (integer coefficients)."""
    if n < 1:
        raise ValueError("need n >= 1")
    seq = [[1], [-1, 1]]
    for _ in range(2, n + 1):
        prev, last = seq[-2], seq[-1]
        nxt = [0] + last
        for k, c in enumerate(prev):
            nxt[k] += c
        seq.append(nxt)
    return [Polynomial(tuple(c)) for c in seq]


def ptilde_polynomials(n):
    """q_0 = 1, q_1 = x - 1, q_{i+1} = x*q_i - q_{i-1} (integer coefficients)."""
    if n < 1:
        raise ValueError("need n >= 1")
    seq = [[1], [-1, 1]]
    for _ in range(2, n + 1):
        prev, last = seq[-2], seq[-1]
        nxt = [0] + last
        for k, c in enumerate(prev):
            nxt[k] -= c
        seq.append(nxt)
    return [Polynomial(tuple(c)) for c in seq]


_X = (0.0, 1.0)
_XM1 = (-1.0, 1.0)
_XP1 = (1.0, 1.0)
_Q_MINUS = (-1.0, -1.0, 1.0)       # x^2 - x - 1
_Q_PLUS = (1.0, -1.0, 1.0)         # x^2 - x + 1
_C_MM = (1.0, -2.0, -1.0, 1.0)     # x^3 - x^2 - 2x + 1
_C_M0 = (-1.0, 0.0, -1.0, 1.0)     # x^3 - x^2 - 1
_C_PM = (-1.0, 2.0, -1.0, 1.0)     # x^3 - x^2 + 2x - 1
_C_P0 = (1.0, 0.0, -1.0, 1.0)      # x^3 - x^2 + 1

_PREDICTED_3BLOCK = {
    "P1": (_XM1, _XM1, _XM1),
    "P2": (_XM1, _XM1, _XP1),
    "P3": (_XM1, _XP1, _XP1),
    "P4": (_XM1, _XM1, _XP1),
    "PD1": (_XM1, _Q_MINUS, _C_MM),
    "PD2": (_XM1, _Q_MINUS, _C_M0),
    "PD3": (_XM1, _Q_PLUS, _C_PM),
    "PD4": (_XM1, _Q_PLUS, _C_P0),
    "Q1": (_XM1, _XM1),
    "Q2": (_XM1, _XP1),
    "QD1": (_X, _XM1, _Q_MINUS),
    "QD2": (_X, _XM1, _Q_PLUS),
}


def predicted_polynomial(preset, n=None):
    """Annihilating-polynomial factors for a preset's preconditioned operator.

    Returns a list of Polynomial factors whose product the operator
    satisfies under the preset's hypothesis (the diagonal and additive
    block-diagonal families assume the relevant zero diagonal blocks).
    """
    if preset in _PREDICTED_3BLOCK:
        return [Polynomial(c) for c in _PREDICTED_3BLOCK[preset]]
    if preset == "Pn":
        if n is None:
            raise ValueError("Pn needs n")
        return [Polynomial(_XM1)] * n
    if preset == "Dn":
        if n is None:
            raise ValueError("Dn needs n")
        return pbar_polynomials(n)[1:]
    if preset == "Mn":
        if n is None:
            raise ValueError("Mn needs n")
        return ptilde_polynomials(n)[1:]
    raise pc.UnknownPresetError(f"unknown preset {preset!r}")


def predicted_roots(preset, n=None):
    """Union (with multiplicity) of the roots of the predicted factors."""
    roots = []
    for p in predicted_polynomial(preset, n=n):
        roots.extend(p.roots())
    return roots


def annihilation_residual(t, factors):
    """Normalized norm of the factor product evaluated at the operator.

    ||prod_i p_i(T)||_F / prod_i (1 + ||T||_F)**deg(p_i), which makes one
    threshold serve operators of any scale.
    """
    t = dense.as_square(t)
    tnorm = dense.frobenius(t)
    r = None
    scale = 1.0
    for p in factors:
        if not isinstance(p, Polynomial):
            p = Polynomial(tuple(p))
        pt = p.at_matrix(t)
        r = pt if r is None else r @ pt
        scale *= (1.0 + tnorm) ** p.degree
    if r is None:
        raise ValueError("need at least one polynomial factor")
    return dense.frobenius(r) / scale


@dataclass
class SpectralReport:
    """Eigenvalues beside the prediction they are checked against."""

    eigenvalues: list
    residuals: list = field(default_factory=list)
    min_real_part: float = math.inf
    membership: list = field(default_factory=list)

    @property
    def max_membership_distance(self):
        if not self.membership:
            return 0.0
        return max(d for _, _, d in self.membership)


def spectrum_membership(eigs, roots, tol):
    """Match every eigenvalue to its nearest predicted root.

    Returns a SpectralReport whose membership list holds
    (eigenvalue, nearest root, distance) triples; tol is recorded by the
    caller, the report itself just carries the distances.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    eigs = [complex(z) for z in eigs]
    roots = [complex(z) for z in roots]
    if not roots:
        raise ValueError("no predicted roots supplied")
    membership = []
    for z in eigs:
        dists = [abs(z - r) for r in roots]
        j = int(np.argmin(dists))
        membership.append((z, roots[j], dists[j]))
    min_re = min((z.real for z in eigs), default=math.inf)
    return SpectralReport(eigenvalues=eigs, min_real_part=min_re,
                          membership=membership)


def positive_stable(eigs, margin=0.0):
    """True iff every eigenvalue has real part strictly above the margin."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    eigs = [complex(z) for z in eigs]
    if not eigs:
        raise ValueError("empty eigenvalue list")
    return min(z.real for z in eigs) > margin


# ---------------------------------------------------------------------------
# Routh tables


@dataclass(frozen=True)
class RouthTable:
    rows: tuple
    first_column: tuple
    sign_changes: int


def routh_table(p):
    """Routh table of a polynomial; sign changes count right-half-plane roots.

    Row 0 and row 1 interleave the descending coefficients; each later
    entry is the 2x2 determinant rule.  A zero first-column entry aborts
    construction (ZeroFirstColumnError) since the plain tabular rule is
    then undefined.
    """
    if not isinstance(p, Polynomial):
        p = Polynomial(tuple(p))
    k = p.degree
    if k < 1:
        raise ValueError("polynomial degree must be >= 1")
    desc = list(reversed(p.coeffs))
    width = (k + 2) // 2
    rows = [
        [desc[j] if j < len(desc) else 0.0 for j in range(0, k + 1, 2)],
        [desc[j] if j < len(desc) else 0.0 for j in range(1, k + 1, 2)],
    ]
    for r in rows:
        while len(r) < width:
            r.append(0.0)
    for i in range(2, k + 1):
        if rows[i - 1][0] == 0.0:
            raise ZeroFirstColumnError(
                f"zero first-column entry in row {i - 1} of the Routh table"
            )
        prev2, prev1 = rows[i - 2], rows[i - 1]
        row = []
        for j in range(width):
            a = prev2[j + 1] if j + 1 < width else 0.0
            b = prev1[j + 1] if j + 1 < width else 0.0
            det = prev2[0] * b - a * prev1[0]
            row.append(-det / prev1[0])
        rows.append(row)
    first = tuple(r[0] for r in rows)
    if any(v == 0.0 for v in first):
        raise ZeroFirstColumnError("zero entry in the completed first column")
    changes = sum(1 for a, b in zip(first, first[1:]) if a * b < 0)
    return RouthTable(rows=tuple(tuple(r) for r in rows),
                      first_column=first, sign_changes=changes)


def coefficient_law_check(k, tol=1e-10):
    """Check the leading/trailing coefficient pattern of the plus-recurrence.

    For the degree-k polynomial of pbar_polynomials the coefficients
    satisfy a_k = 1, a_{k-1} = -1, a_{k-2} = k-1, a_{k-3} = -(k-2),
    a_0 = (-1)**k.
    """
    if k < 3:
        raise ValueError("need k >= 3")
    c = pbar_polynomials(k)[k].coeffs
    return (abs(c[k] - 1.0) <= tol
            and abs(c[k - 1] + 1.0) <= tol
            and abs(c[k - 2] - (k - 1.0)) <= tol
            and abs(c[k - 3] + (k - 2.0)) <= tol
            and abs(c[0] - (-1.0) ** k) <= tol)


# ---------------------------------------------------------------------------
# verification suite (shared by the CLI and the acceptance tests)

# whether the preset's predicted spectrum sits strictly in the right half-plane
POSITIVE_STABLE_EXPECTED = {
    "P1": True, "P2": False, "P3": False, "P4": False,
    "PD1": False, "PD2": False, "PD3": True, "PD4": False,
    "Q1": True, "Q2": False, "QD1": False, "QD2": True,
    "Pn": True, "Dn": True, "Mn": False,
}


def hypothesis_options(preset, seed, sizes, n=None):
    """SystemOptions satisfying the hypothesis under which the preset's
    polynomial identity holds."""
    sizes = tuple(int(s) for s in sizes)
    if preset in ("PD1", "PD2", "PD3", "PD4"):
        return SystemOptions(seed=seed, sizes=tuple(sorted(sizes[:3], reverse=True)),
                             zero_tail=True)
    if preset in ("QD1", "QD2"):
        s = sorted(sizes[:3], reverse=True)
        return SystemOptions(seed=seed, sizes=(s[0], s[2], s[1]), zero_middle=True)
    if preset in ("Q1", "Q2"):
        return SystemOptions(seed=seed, sizes=sizes[:3])
    if preset in ("Dn", "Mn"):
        nn = n or len(sizes)
        return SystemOptions(seed=seed, sizes=_tail_sizes(sizes, nn), zero_tail=True)
    if preset == "Pn":
        nn = n or len(sizes)
        return SystemOptions(seed=seed, sizes=_cycle_sizes(sizes, nn))
    return SystemOptions(seed=seed, sizes=sizes[:3])


def _cycle_sizes(sizes, n):
    return tuple(sizes[i % len(sizes)] for i in range(n))


def _tail_sizes(sizes, n):
    base = max(max(sizes), n + 1)
    return tuple(base - i for i in range(n))


def build_preconditioned(preset, seed, sizes, n=None):
    """Generate a hypothesis system and form the preset's exact P^{-1} A.

    Returns (T, system, operator-matrix) where for the additive presets
    the system is the permuted arrowhead and the operator its assembly.
    """
    opts = hypothesis_options(preset, seed, sizes, n=n)
    sys3 = random_system(opts)
    if preset in ("Q1", "Q2", "QD1", "QD2"):
        arrow, _ = permute_threeblock(sys3)
        p = pc.make_preconditioner(preset, arrow)
        t = pc.preconditioned_matrix(p, arrow)
        return t, arrow, assemble_arrowhead(arrow)
    p = pc.make_preconditioner(preset, sys3)
    t = pc.preconditioned_matrix(p, sys3)
    return t, sys3, assemble(sys3)


@dataclass
class PresetCheck:
    kind: str
    name: str
    seed: int
    residual: float
    min_real_part: float
    max_membership_distance: float
    passed: bool
    detail: str = ""


def membership_tolerance(preset, n=None):
    """Defectiveness-aware membership tolerance.

    1e-7 when every predicted root is simple.  A root of multiplicity k
    makes the operator defective, and computed eigenvalues then scatter
    like eps**(1/k); membership becomes a sanity check at that scale
    (annihilation is the sharp check for those presets).
    """
    roots = predicted_roots(preset, n=n)
    mult = 1
    for i, a in enumerate(roots):
        mult = max(mult, sum(1 for b in roots if abs(a - b) < 1e-6))
    if mult == 1:
        return MEMBERSHIP_TOL_COMPUTED
    return max(MEMBERSHIP_TOL_COMPUTED, 50.0 * float(np.finfo(float).eps) ** (1.0 / mult))


def verify_preset(preset, seed, sizes, n=None):
    """One row of the verification suite for one preset and seed."""
    nn = (n or 3) if preset in ("Pn", "Dn", "Mn") else 3
    t, _, _ = build_preconditioned(preset, seed, sizes, n=nn)
    factors = predicted_polynomial(preset, n=nn)
    residual = annihilation_residual(t, factors)
    eigs = dense.eigenvalues(t)
    roots = predicted_roots(preset, n=nn)
    tol = membership_tolerance(preset, n=nn)
    report = spectrum_membership(eigs, roots, tol)
    ok = (residual <= ANNIHILATION_TOL
          and report.max_membership_distance <= tol)
    detail = ""
    if POSITIVE_STABLE_EXPECTED[preset]:
        stable = positive_stable(eigs, STABILITY_MARGIN)
        ok = ok and stable
        detail = "positive-stable" if stable else "expected positive stability"
    label = preset if preset not in ("Pn", "Dn", "Mn") else f"{preset}(n={nn})"
    return PresetCheck(kind="preset", name=label, seed=seed, residual=residual,
                       min_real_part=report.min_real_part,
                       max_membership_distance=report.max_membership_distance,
                       passed=ok, detail=detail)


def verify_ldu(seed, sizes, n_range=range(2, 9)):
    """LDU reconstruction rows: relative Frobenius error per block count."""
    rows = []
    for n in n_range:
        opts = SystemOptions(seed=seed, sizes=_cycle_sizes(sizes, n))
        sys_n = random_system(opts)
        a = assemble(sys_n)
        l, d, u = pc.build_ldu(sys_n)
        err = dense.frobenius(l @ d @ u - a) / dense.frobenius(a)
        rows.append(PresetCheck(kind="ldu", name=f"n={n}", seed=seed,
                                residual=err, min_real_part=math.inf,
                                max_membership_distance=0.0,
                                passed=err <= LDU_RTOL))
    return rows


def verify_routh(k_max=12):
    """Routh rows: alternating unit first column with k sign changes."""
    rows = []
    polys = pbar_polynomials(k_max)
    for k in range(1, k_max + 1):
        table = routh_table(polys[k])
        alternating = all(
            abs(v - (-1.0) ** i) <= 1e-10 for i, v in enumerate(table.first_column)
        )
        law = coefficient_law_check(k) if k >= 3 else True
        ok = alternating and table.sign_changes == k and law
        rows.append(PresetCheck(kind="routh", name=f"k={k}", seed=0,
                                residual=0.0, min_real_part=math.inf,
                                max_membership_distance=0.0, passed=ok,
                                detail=f"sign_changes={table.sign_changes}"))
    return rows


def run_suite(seed, sizes, presets=None, n_sweep=None):
    """Full verification sweep; returns PresetCheck rows.

    An n sweep adds rows for every n-block family (Mn included) at each
    n = 2..n_sweep.
    """
    rows = []
    if presets:
        names = list(presets)
    elif n_sweep:
        names = list(DEFAULT_VERIFY_PRESETS) + ["Mn"]
    else:
        names = list(DEFAULT_VERIFY_PRESETS)
    for preset in names:
        if preset in ("Pn", "Dn", "Mn"):
            ns = list(range(2, (n_sweep or 3) + 1)) if n_sweep else [3]
            for nn in ns:
                rows.append(verify_preset(preset, seed, sizes, n=nn))
        else:
            rows.append(verify_preset(preset, seed, sizes))
    rows.extend(verify_ldu(seed, sizes))
    rows.extend(verify_routh())
    return rows


# default CLI verification row set: the twelve named three-block/additive
# presets plus the n-family triangular and diagonal ones at n=3
DEFAULT_VERIFY_PRESETS = (
    "P1", "P2", "P3", "P4", "PD1", "PD2", "PD3", "PD4",
    "Q1", "Q2", "QD1", "QD2", "Pn", "Dn",
)


def report_csv_rows(rows):
    """CSV lines (header first) for a list of PresetCheck rows."""
    out = ["kind,name,seed,residual,min_real_part,max_membership_distance,"
           "status,detail"]
    for r in rows:
        mre = "" if math.isinf(r.min_real_part) else repr(r.min_real_part)
        out.append(
            f"{r.kind},{r.name},{r.seed},{r.residual!r},{mre},"
            f"{r.max_membership_distance!r},{'pass' if r.passed else 'FAIL'},"
            f"{r.detail}"
        )
    return out
