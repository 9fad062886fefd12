"""Three-field poroelasticity benchmark on the unit square.

Displacement in vector P2, total pressure and fluid pressure in P1
(Taylor-Hood pair plus P1), one backward-Euler step from a zero initial
state.  The assembled system is block-tridiagonal with a negated middle
block, matching the saddle point layout the preconditioner families
expect.  The two Schur complements are approximated by a scaled total
pressure mass matrix and a mass-shifted pressure block (the classical
Fourier-symbol approximations), then factored with drop-tolerance
incomplete Cholesky.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import precond as pc
from .krylov import GmresBreakdownError, IterationTable, LinearOperator, gmres
from .sparse import (CsrMatrix, csr_add, csr_from_triplets, csr_scale,
                     csr_submatrix, csr_transpose, ic_solve, ichol,
                     read_matrix_market, spmv, write_matrix_market)

#: benchmark table column order: diagonal family first, then triangular
BENCH_COLUMNS = ("PD1", "PD2", "PD3", "PD4", "P1", "P2", "P3", "P4")


@dataclass(frozen=True)
class BiotParameters:
    """Material and discretization data; Lame parameters are derived."""

    E: float = 1.0
    nu: float = 0.499
    alpha: float = 1.0
    c0: float = 1.0
    K: float = 1.0
    dt: float = 1.0
    rho_f: float = 1.0
    gravity: tuple = (0.0, 0.0)
    body_force: tuple = (1.0, 1.0)
    source: float = 1.0

    def __post_init__(self):
        if not self.nu < 0.5:
            raise ValueError(f"Poisson ratio must be < 0.5, got {self.nu}")

    @property
    def lam(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))


@dataclass(frozen=True)
class TriangularMesh:
    """Uniform right-triangle mesh of the unit square.

    Each grid cell is split along the diagonal from its lower-left to its
    upper-right corner; vertices are numbered lexicographically (x fastest)
    and edges by sorted vertex pair.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def p2_node_coords(self):
        mids = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        return np.vstack([self.vertices, mids])


def build_mesh(n):
    if n < 1:
        raise ValueError("need at least one cell per side")
    line = np.arange(n + 1) / n
    xx, yy = np.meshgrid(line, line, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10 = v00 + 1
            v01 = v00 + (n + 1)
            v11 = v01 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.array(tris, dtype=np.int64)
    # local edge k sits opposite local vertex k
    pairs = np.concatenate([triangles[:, [1, 2]], triangles[:, [2, 0]],
                            triangles[:, [0, 1]]])
    pairs.sort(axis=1)
    nv = vertices.shape[0]
    keys = pairs[:, 0] * nv + pairs[:, 1]
    unique_keys = np.unique(keys)
    edges = np.column_stack([unique_keys // nv, unique_keys % nv])
    idx = np.searchsorted(unique_keys, keys)
    tri_edges = idx.reshape(3, -1).T
    return TriangularMesh(n=n, vertices=vertices, triangles=triangles,
                          edges=edges, tri_edges=tri_edges)


# quadrature rules in barycentric coordinates (weights sum to 1)
_QUAD_DEG2 = (
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.array([1.0, 1.0, 1.0]) / 3.0,
)
_A6 = 0.445948490915965
_B6 = 0.091576213509771
_QUAD_DEG4 = (
    np.array([
        [_A6, _A6, 1.0 - 2.0 * _A6],
        [_A6, 1.0 - 2.0 * _A6, _A6],
        [1.0 - 2.0 * _A6, _A6, _A6],
        [_B6, _B6, 1.0 - 2.0 * _B6],
        [_B6, 1.0 - 2.0 * _B6, _B6],
        [1.0 - 2.0 * _B6, _B6, _B6],
    ]),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)


def _geometry(mesh):
    p = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    if (area <= 0).any():
        raise ValueError("mesh contains nonpositively oriented triangles")
    grad_l = np.empty((mesh.num_triangles, 3, 2))
    x, y = p[:, :, 0], p[:, :, 1]
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grad_l[:, i, 0] = (y[:, j] - y[:, k]) / det
        grad_l[:, i, 1] = (x[:, k] - x[:, j]) / det
    return area, grad_l


def _p2_values(l):
    l0, l1, l2 = l
    return np.array([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ])


def _p2_grads(l, grad_l):
    # (nt, 6, 2) gradients at one barycentric point
    l0, l1, l2 = l
    g = np.empty((grad_l.shape[0], 6, 2))
    for i, li in enumerate((l0, l1, l2)):
        g[:, i] = (4 * li - 1) * grad_l[:, i]
    g[:, 3] = 4 * (l1 * grad_l[:, 2] + l2 * grad_l[:, 1])
    g[:, 4] = 4 * (l2 * grad_l[:, 0] + l0 * grad_l[:, 2])
    g[:, 5] = 4 * (l0 * grad_l[:, 1] + l1 * grad_l[:, 0])
    return g


@dataclass
class BiotAssembly:
    """Assembled blocks, right-hand side, and kept-dof maps."""

    N: int
    params: BiotParameters
    a_u: CsrMatrix
    b_uxi: CsrMatrix
    b_uxi_t: CsrMatrix
    a_xi: CsrMatrix
    b_xip: CsrMatrix
    b_xip_t: CsrMatrix
    a_p: CsrMatrix
    m_xi: CsrMatrix
    m_p: CsrMatrix
    rhs: np.ndarray
    u_keep: np.ndarray
    p_keep: np.ndarray

    @property
    def sizes(self):
        return (self.a_u.rows, self.a_xi.rows, self.a_p.rows)

    @property
    def total_size(self):
        return sum(self.sizes)


def assemble_biot(mesh, params, apply_bcs=True):
    """Assemble the one-step three-field system.

    Fields: vector P2 displacement (x dofs then y dofs), P1 total
    pressure, P1 fluid pressure.  Dirichlet walls are the vertical lines
    x=0 and x=1 for both displacement and fluid pressure; elimination is
    symmetric (homogeneous data).  The right-hand side carries the body
    force and one implicit step of the source from a zero initial state.
    """
    lam, mu = params.lam, params.mu
    nt = mesh.num_triangles
    nv = mesh.num_vertices
    n_scalar = nv + mesh.num_edges
    area, grad_l = _geometry(mesh)
    tri = mesh.triangles
    nodes = np.hstack([tri, nv + mesh.tri_edges])        # (nt, 6) scalar P2 nodes

    ke_u = np.zeros((nt, 12, 12))
    ke_b = np.zeros((nt, 3, 12))
    ke_m = np.zeros((nt, 3, 3))
    load_u = np.zeros((nt, 6))
    load_p1 = np.zeros((nt, 3))

    pts4, wts4 = _QUAD_DEG4
    for l, w in zip(pts4, wts4):
        g = _p2_grads(l, grad_l)
        b = np.zeros((nt, 3, 12))
        b[:, 0, 0:6] = g[:, :, 0]
        b[:, 1, 6:12] = g[:, :, 1]
        b[:, 2, 0:6] = g[:, :, 1]
        b[:, 2, 6:12] = g[:, :, 0]
        bd = b.copy()
        bd[:, 2] *= 0.5
        ke_u += (2.0 * mu * w * area)[:, None, None] * np.einsum(
            "tik,til->tkl", bd, b)

    pts2, wts2 = _QUAD_DEG2
    for l, w in zip(pts2, wts2):
        g = _p2_grads(l, grad_l)
        div = np.concatenate([g[:, :, 0], g[:, :, 1]], axis=1)   # (nt, 12)
        p1v = np.asarray(l)
        ke_b += -(w * area)[:, None, None] * (p1v[None, :, None] * div[:, None, :])
        ke_m += (w * area)[:, None, None] * np.outer(p1v, p1v)[None]
        p2v = _p2_values(l)
        load_u += (w * area)[:, None] * p2v[None, :]
        load_p1 += (w * area)[:, None] * p1v[None, :]

    ke_stiff = area[:, None, None] * np.einsum("tia,tja->tij", grad_l, grad_l)

    udofs = np.hstack([nodes, nodes + n_scalar])         # (nt, 12)
    n_u_full = 2 * n_scalar

    def scatter(rows_dofs, cols_dofs, ke, nrows, ncols):
        nr = rows_dofs.shape[1]
        nc = cols_dofs.shape[1]
        ii = np.repeat(rows_dofs, nc, axis=1).ravel()
        jj = np.tile(cols_dofs, (1, nr)).ravel()
        return csr_from_triplets(nrows, ncols, (ii, jj, ke.ravel()))

    a_u = scatter(udofs, udofs, ke_u, n_u_full, n_u_full)
    b_uxi = scatter(tri, udofs, ke_b, nv, n_u_full)
    mass = scatter(tri, tri, ke_m, nv, nv)
    stiff = scatter(tri, tri, ke_stiff, nv, nv)

    a_xi = scatter(tri, tri, (1.0 / lam) * ke_m, nv, nv)
    b_xip = scatter(tri, tri, (params.alpha / lam) * ke_m, nv, nv)
    a_p = csr_add(
        csr_scale(mass, -(params.c0 + params.alpha ** 2 / lam)),
        csr_scale(stiff, -params.dt * params.K),
    )

    f_u = np.zeros(n_u_full)
    np.add.at(f_u, nodes.ravel(),
              params.body_force[0] * load_u.ravel())
    np.add.at(f_u, (nodes + n_scalar).ravel(),
              params.body_force[1] * load_u.ravel())
    f_p = np.zeros(nv)
    np.add.at(f_p, tri.ravel(), -params.dt * params.source * load_p1.ravel())
    gx, gy = params.gravity
    if gx != 0.0 or gy != 0.0:
        gdot = gx * grad_l[:, :, 0] + gy * grad_l[:, :, 1]   # (nt, 3)
        np.add.at(f_p, tri.ravel(),
                  (params.dt * params.K * params.rho_f
                   * (area[:, None] * gdot)).ravel())
    f_xi = np.zeros(nv)

    if apply_bcs:
        coords = mesh.p2_node_coords()
        on_wall = (coords[:, 0] == 0.0) | (coords[:, 0] == 1.0)
        u_keep = np.concatenate([np.flatnonzero(~on_wall),
                                 n_scalar + np.flatnonzero(~on_wall)])
        vx = mesh.vertices[:, 0]
        p_keep = np.flatnonzero((vx != 0.0) & (vx != 1.0))
    else:
        u_keep = np.arange(n_u_full)
        p_keep = np.arange(nv)
    xi_keep = np.arange(nv)

    a_u = csr_submatrix(a_u, u_keep, u_keep)
    b_uxi = csr_submatrix(b_uxi, xi_keep, u_keep)
    b_xip_r = csr_submatrix(b_xip, p_keep, xi_keep)
    a_p = csr_submatrix(a_p, p_keep, p_keep)
    m_p = csr_submatrix(mass, p_keep, p_keep)

    rhs = np.concatenate([f_u[u_keep], f_xi, f_p[p_keep]])
    return BiotAssembly(
        N=mesh.n, params=params,
        a_u=a_u, b_uxi=b_uxi, b_uxi_t=csr_transpose(b_uxi),
        a_xi=a_xi, b_xip=b_xip_r, b_xip_t=csr_transpose(b_xip_r),
        a_p=a_p, m_xi=mass, m_p=m_p, rhs=rhs,
        u_keep=u_keep, p_keep=p_keep,
    )


def biot_operator(assembly):
    """Monolithic matvec for the assembled block system."""
    nu, nxi, np_ = assembly.sizes
    a = assembly

    def mv(v):
        vu, vxi, vp = v[:nu], v[nu:nu + nxi], v[nu + nxi:]
        yu = spmv(a.a_u, vu) + spmv(a.b_uxi_t, vxi)
        yxi = spmv(a.b_uxi, vu) - spmv(a.a_xi, vxi) + spmv(a.b_xip_t, vp)
        yp = spmv(a.b_xip, vxi) + spmv(a.a_p, vp)
        return np.concatenate([yu, yxi, yp])

    return LinearOperator(assembly.total_size, mv, tag=f"biot(N={assembly.N})")


def fourier_schur_approx(assembly, params):
    """Mass-based approximations of the two Schur complements.

    The middle complement is (1/lam + 1/(2 mu)) M_xi; the trailing one is
    A_p + 2 mu alpha^2 / (lam (lam + 2 mu)) M_p.  The scalar identity
    -(c0 + a^2/lam) + shift == -(c0 + a^2/(2 mu + lam)) is checked here.
    """
    lam, mu, al = params.lam, params.mu, params.alpha
    scale_xi = 1.0 / lam + 1.0 / (2.0 * mu)
    shift = 2.0 * mu * al ** 2 / (lam * (lam + 2.0 * mu))
    lhs = -(params.c0 + al ** 2 / lam) + shift
    rhs = -(params.c0 + al ** 2 / (2.0 * mu + lam))
    if abs(lhs - rhs) > 1e-12 * max(1.0, abs(rhs)):
        raise AssertionError("mass-shift coefficient identity failed")
    s_xi = csr_scale(assembly.m_xi, scale_xi)
    s_p = csr_add(assembly.a_p, csr_scale(assembly.m_p, shift))
    return s_xi, s_p


@dataclass
class BiotPreconditioners:
    """The eight inexact presets sharing three incomplete factors."""

    by_name: dict
    factor_u: object
    factor_xi: object
    factor_p: object
    tau: float

    def __getitem__(self, name):
        return self.by_name[name]


def build_biot_preconditioners(assembly, params, tau):
    """IC(tau)-backed instances of the four triangular and four diagonal
    presets on the assembled system.

    The trailing complement approximation is negative definite, so its
    negation is factored and the solve is negated back.
    """
    if tau < 0:
        raise ValueError("drop tolerance must be >= 0")
    s_xi, s_p = fourier_schur_approx(assembly, params)
    fac_u = ichol(assembly.a_u, tau)
    fac_xi = ichol(s_xi, tau)
    fac_p = ichol(csr_scale(s_p, -1.0), tau)
    solves = (
        lambda v: ic_solve(fac_u, v),
        lambda v: ic_solve(fac_xi, v),
        lambda v: -ic_solve(fac_p, v),
    )
    subs = (
        lambda v: spmv(assembly.b_uxi, v),
        lambda v: spmv(assembly.b_xip, v),
    )
    sizes = assembly.sizes
    by_name = {}
    for name in BENCH_COLUMNS:
        by_name[name] = pc.make_preconditioner(
            name, sizes=sizes, solves=solves, sub_matvecs=subs)
    return BiotPreconditioners(by_name=by_name, factor_u=fac_u,
                               factor_xi=fac_xi, factor_p=fac_p, tau=tau)


# benchmark stopping tolerance, calibrated so coarse meshes are not
# over-solved: at much tighter tolerances the 16->32 refinement growth of
# the best-preconditioned cells quantizes below its expected range
BENCH_TOL = 4e-6


def benchmark(n_values, tau_values, tol=BENCH_TOL, maxit=1500,
              presets=BENCH_COLUMNS, params=None, jobs=1):
    """GMRES iteration counts over the (N, tau, preset) grid.

    Returns (tables, counts): one IterationTable per tau (rows are mesh
    sizes, columns the presets in table order) and a flat dict keyed by
    (N, tau, preset) with None marking non-convergence.  Cells may be
    dispatched to a thread pool; the output order is fixed regardless.
    """
    params = params or BiotParameters()
    counts = {}
    works = []
    for n in n_values:
        mesh = build_mesh(n)
        asm = assemble_biot(mesh, params)
        op = biot_operator(asm)
        for tau in tau_values:
            pres = build_biot_preconditioners(asm, params, tau)
            for name in presets:
                works.append(((n, tau, name), op, pres[name], asm.rhs))

    def run(item):
        key, op, pre, rhs = item
        try:
            _, stats = gmres(op, pre, rhs, tol=tol, maxit=maxit)
        except GmresBreakdownError:
            return key, None
        return key, (stats.iterations if stats.converged else None)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, works))
    else:
        results = [run(wk) for wk in works]
    counts = dict(results)

    notes = (
        "rhs: body force (1,1), source 1, one implicit step from rest",
        "dirichlet walls: x=0 and x=1 for displacement and fluid pressure",
    )
    tables = []
    for tau in tau_values:
        rows = [f"{n}x{n}" for n in n_values]
        grid = [[counts[(n, tau, name)] for name in presets] for n in n_values]
        tables.append((tau, IterationTable(
            row_labels=rows, col_labels=list(presets), counts=grid,
            tol=tol, maxit=maxit,
            header_notes=(f"ic drop tolerance tau={tau:g}",) + notes)))
    return tables, counts


def ordering_violations(counts, n_values, tau_values):
    """Qualitative iteration-count structure checks.

    Empty return means: the triangular preset with all-positive-real
    predicted spectrum wins its family, the diagonal one likewise, the
    two sign-twin triangular presets agree within 2 iterations, counts do
    not increase when the drop tolerance tightens, and per-preset growth
    under mesh refinement stays within [1.3, 3.5].
    """
    bad = []

    def c(n, tau, name):
        v = counts.get((n, tau, name))
        if v is None:
            bad.append(f"N={n} tau={tau:g} {name}: did not converge")
        return math.inf if v is None else v

    for n in n_values:
        for tau in tau_values:
            p = {k: c(n, tau, k) for k in BENCH_COLUMNS}
            if not p["P1"] < min(p["P2"], p["P3"], p["P4"]):
                bad.append(f"N={n} tau={tau:g}: P1 not strictly best triangular")
            if not p["PD3"] < min(p["PD1"], p["PD2"], p["PD4"]):
                bad.append(f"N={n} tau={tau:g}: PD3 not strictly best diagonal")
            if abs(p["P2"] - p["P3"]) > 2:
                bad.append(f"N={n} tau={tau:g}: |P2-P3| > 2")
    taus = sorted(tau_values, reverse=True)
    for hi, lo in zip(taus, taus[1:]):
        for n in n_values:
            for name in BENCH_COLUMNS:
                if c(n, lo, name) > c(n, hi, name):
                    bad.append(
                        f"N={n} {name}: tau={lo:g} count exceeds tau={hi:g}")
    ns = sorted(n_values)
    for na, nb in zip(ns, ns[1:]):
        for tau in tau_values:
            for name in BENCH_COLUMNS:
                ratio = c(nb, tau, name) / c(na, tau, name)
                if not 1.3 <= ratio <= 3.5:
                    bad.append(
                        f"{name} tau={tau:g}: growth {na}->{nb} ratio {ratio:.2f} "
                        f"outside [1.3, 3.5]")
    return bad


# ---------------------------------------------------------------------------
# block export

_BIOT_MANIFEST = (
    ("A", 1, "A_u.mtx", "a_u"),
    ("A", 2, "A_xi.mtx", "a_xi"),
    ("A", 3, "A_p.mtx", "a_p"),
    ("C", 1, "B_uxi.mtx", "b_uxi"),
    ("C", 2, "B_xip.mtx", "b_xip"),
    ("M", 1, "M_xi.mtx", "m_xi"),
    ("M", 2, "M_p.mtx", "m_p"),
)


def export_blocks(assembly, directory):
    """Write the five system blocks and two mass matrices plus a manifest.

    The coupling rows are stored once (the system is symmetric, the
    superdiagonal blocks are their transposes).  Returns the manifest path.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = ["n=3"]
    for role, idx, name, attr in _BIOT_MANIFEST:
        write_matrix_market(d / name, getattr(assembly, attr))
        lines.append(f"{role} {idx} {name}")
    manifest = d / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="ascii")
    return manifest


def load_blocks(manifest_path):
    """Read back a block export as a dict keyed by block attribute name."""
    p = Path(manifest_path)
    out = {}
    names = {(role, idx): attr for role, idx, _, attr in _BIOT_MANIFEST}
    for raw in p.read_text(encoding="ascii").splitlines()[1:]:
        if not raw.strip():
            continue
        role, idx, name = raw.split()
        out[names[(role, int(idx))]] = read_matrix_market(p.parent / name)
    return out
