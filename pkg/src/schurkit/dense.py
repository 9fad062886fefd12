"""Dense real linear algebra kernels.

Pivoted LU factorization, Hessenberg reduction plus double-shift QR
eigenvalues, matrix polynomial evaluation, and companion-matrix root
finding.  Everything operates on plain float64 numpy arrays and is
deterministic for fixed inputs (fixed pivoting rule, fixed accumulation
order, no randomness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Pivot singularity threshold, relative to the infinity norm of the input.
PIVOT_RTOL = 1e-14
# Subdiagonal deflation threshold for the QR iteration.
DEFLATION_RTOL = 1e-13
# Hard cap on the eigensolver input size (desk scale).
EIGEN_SIZE_LIMIT = 2000


class SingularMatrixError(ValueError):
    """A pivot fell below PIVOT_RTOL times the matrix infinity norm."""


class EigenConvergenceError(RuntimeError):
    """The QR iteration exhausted its sweep budget without deflating."""


class ZeroLeadingCoefficientError(ValueError):
    """Root finding was asked for a polynomial with zero leading coefficient."""


class ZeroEigenvalueError(ValueError):
    """A spectral condition number was requested for a spectrum containing 0."""


def as_matrix(a):
    """Validate ``a`` as a 2-D real matrix with finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size and not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    return m


def as_square(a):
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        raise ValueError("empty matrix")
    return m


def frobenius(a):
    a = np.asarray(a, dtype=float)
    return math.sqrt(float((a * a).sum()))


@dataclass(frozen=True)
class LUFactors:
    """Combined LU storage with partial-pivot row swaps.

    ``lu`` holds L strictly below the diagonal (unit diagonal implied) and
    U on and above it.  ``piv[k]`` is the row swapped into position k at
    step k; ``sign`` is the permutation sign.
    """

    lu: np.ndarray
    piv: np.ndarray
    sign: float

    @property
    def n(self):
        return self.lu.shape[0]


def lu_factor(a):
    """Factor a square matrix as P A = L U with partial pivoting.

    Raises SingularMatrixError when the pivot column maximum falls at or
    below PIVOT_RTOL times the infinity norm of the input.
    """
    m = as_square(a)
    n = m.shape[0]
    norm = float(np.abs(m).sum(axis=1).max())
    lu = m.copy()
    piv = np.empty(n, dtype=np.int64)
    sign = 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= PIVOT_RTOL * norm:
            raise SingularMatrixError(
                f"pivot {k} is {abs(lu[p, k]):.3e}, below threshold "
                f"{PIVOT_RTOL * norm:.3e}"
            )
        piv[k] = p
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            sign = -sign
        lu[k + 1:, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return LUFactors(lu=lu, piv=piv, sign=sign)


def lu_solve(f, b):
    """Solve A x = b given LUFactors of A.  ``b`` may be a vector or matrix."""
    x = np.asarray(b, dtype=float)
    vec = x.ndim == 1
    if vec:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != f.n:
        raise ValueError(f"right-hand side shape {np.shape(b)} does not match n={f.n}")
    x = x.copy()
    lu = f.lu
    n = f.n
    for k in range(n):
        p = f.piv[k]
        if p != k:
            x[[k, p]] = x[[p, k]]
    for k in range(n - 1):
        x[k + 1:] -= np.outer(lu[k + 1:, k], x[k])
    for k in range(n - 1, -1, -1):
        x[k] /= lu[k, k]
        if k:
            x[:k] -= np.outer(lu[:k, k], x[k])
    return x[:, 0] if vec else x


def lu_det(f):
    """Determinant from an LU factorization (sign times product of pivots)."""
    return f.sign * float(np.prod(np.diag(f.lu)))


def mat_mul(a, b):
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def mat_poly_eval(coeffs, t):
    """Horner evaluation of c0*I + c1*T + ... + cd*T^d."""
    t = as_square(t)
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise ValueError("coefficient list must be nonempty")
    n = t.shape[0]
    eye = np.eye(n)
    r = coeffs[-1] * eye
    for c in reversed(coeffs[:-1]):
        r = r @ t + c * eye
    return r


def _eig2(a, b, c, d):
    # closed-form eigenvalues of [[a, b], [c, d]]
    t = 0.5 * (a + d)
    det = a * d - b * c
    disc = t * t - det
    if disc >= 0.0:
        s = math.sqrt(disc)
        l1 = t + (s if t >= 0.0 else -s)
        if l1 != 0.0:
            l2 = det / l1
        else:
            l2 = t - (s if t >= 0.0 else -s)
        return [complex(l1), complex(l2)]
    s = math.sqrt(-disc)
    return [complex(t, s), complex(t, -s)]


def _reflector(x):
    nx = math.sqrt(float((x * x).sum()))
    if nx == 0.0:
        return None
    v = x.astype(float, copy=True)
    v[0] += nx if v[0] >= 0.0 else -nx
    nv = math.sqrt(float((v * v).sum()))
    if nv == 0.0:
        return None
    return v / nv


def hessenberg(a):
    """Householder reduction to upper Hessenberg form (similarity)."""
    h = as_square(a).copy()
    n = h.shape[0]
    for k in range(n - 2):
        u = _reflector(h[k + 1:, k])
        if u is None:
            continue
        h[k + 1:, k:] -= 2.0 * np.outer(u, u @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ u, u)
        h[k + 2:, k] = 0.0
    return h


def _francis_step(h, lo, hi, exceptional):
    # one implicit double-shift sweep on the active window h[lo:hi+1, lo:hi+1]
    if exceptional:
        exc = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2])
        s = 1.5 * exc
        t = -0.4375 * exc * exc
    else:
        s = h[hi - 1, hi - 1] + h[hi, hi]
        t = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
    x = h[lo, lo] * h[lo, lo] + h[lo, lo + 1] * h[lo + 1, lo] - s * h[lo, lo] + t
    y = h[lo + 1, lo] * (h[lo, lo] + h[lo + 1, lo + 1] - s)
    z = h[lo + 1, lo] * h[lo + 2, lo + 1]
    for k in range(lo, hi - 1):
        if k > lo:
            x = h[k, k - 1]
            y = h[k + 1, k - 1]
            z = h[k + 2, k - 1] if k + 2 <= hi else 0.0
        u = _reflector(np.array([x, y, z]))
        if u is not None:
            lcol = max(lo, k - 1)
            h[k:k + 3, lcol:hi + 1] -= 2.0 * np.outer(u, u @ h[k:k + 3, lcol:hi + 1])
            rrow = min(hi, k + 3)
            h[lo:rrow + 1, k:k + 3] -= 2.0 * np.outer(h[lo:rrow + 1, k:k + 3] @ u, u)
        if k > lo:
            h[k + 1, k - 1] = 0.0
            if k + 2 <= hi:
                h[k + 2, k - 1] = 0.0
    x = h[hi - 1, hi - 2]
    y = h[hi, hi - 2]
    u = _reflector(np.array([x, y]))
    if u is not None:
        h[hi - 1:hi + 1, hi - 2:hi + 1] -= 2.0 * np.outer(
            u, u @ h[hi - 1:hi + 1, hi - 2:hi + 1]
        )
        h[lo:hi + 1, hi - 1:hi + 1] -= 2.0 * np.outer(
            h[lo:hi + 1, hi - 1:hi + 1] @ u, u
        )
    h[hi, hi - 2] = 0.0


def eigenvalues(a):
    """All eigenvalues of a real square matrix, as a sorted list of complex.

    Householder Hessenberg reduction followed by Francis double-shift QR
    with deflation.  Complex pairs come out exactly conjugate.  Raises
    EigenConvergenceError after 60*n sweeps without a deflation.
    """
    m = as_square(a)
    n = m.shape[0]
    if n > EIGEN_SIZE_LIMIT:
        raise ValueError(f"matrix size {n} exceeds desk-scale limit {EIGEN_SIZE_LIMIT}")
    h = hessenberg(m)
    hnorm = frobenius(h)
    eigs = []
    hi = n - 1
    budget = 60 * n
    since_deflation = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            thr = DEFLATION_RTOL * (abs(h[lo - 1, lo - 1]) + abs(h[lo, lo]))
            if thr == 0.0:
                thr = DEFLATION_RTOL * hnorm
            if abs(h[lo, lo - 1]) <= thr:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(complex(h[hi, hi]))
            hi -= 1
            since_deflation = 0
            continue
        if lo == hi - 1:
            eigs.extend(_eig2(h[lo, lo], h[lo, lo + 1], h[lo + 1, lo], h[lo + 1, lo + 1]))
            hi -= 2
            since_deflation = 0
            continue
        since_deflation += 1
        if since_deflation > budget:
            raise EigenConvergenceError(
                f"no deflation after {budget} QR sweeps (active block {lo}:{hi})"
            )
        _francis_step(h, lo, hi, exceptional=(since_deflation % 10 == 0))
    eigs.sort(key=lambda z: (z.real, z.imag))
    return eigs


def poly_roots(coeffs):
    """Roots of a real polynomial given ascending coefficients.

    Computed as the eigenvalues of the monic companion matrix.
    """
    c = [float(v) for v in coeffs]
    if len(c) < 2:
        raise ValueError("polynomial must have degree >= 1")
    if c[-1] == 0.0:
        raise ZeroLeadingCoefficientError("leading coefficient is zero")
    d = len(c) - 1
    monic = np.array(c[:-1]) / c[-1]
    comp = np.zeros((d, d))
    for i in range(d - 1):
        comp[i + 1, i] = 1.0
    comp[:, d - 1] = -monic
    return eigenvalues(comp)


def spectral_condition(eigs):
    """max |lambda| / min |lambda| over a nonzero spectrum."""
    mags = [abs(complex(z)) for z in eigs]
    if not mags:
        raise ValueError("empty eigenvalue list")
    if min(mags) == 0.0:
        raise ZeroEigenvalueError("spectrum contains a zero eigenvalue")
    return max(mags) / min(mags)
