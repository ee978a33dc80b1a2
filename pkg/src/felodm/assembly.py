"""Bilinear forms, load vectors, norms, and sparse linear solvers.

The discrete operator couples two conforming P1 pieces through interior
penalty terms on the refinement interface: with [v] = v_refined - v_coarse
and {w} = (w_refined + w_coarse) / 2,

    a(u, v) = (A grad u, grad v)
            - <{A grad u . n}, [v]> - <[u], {A grad v . n}>
            + (penalty / h) <[u], [v]>

where n points out of the refined region and h is the global fine mesh
size (also the length of every interface edge).  All interface integrals
are evaluated in closed form; traces of piecewise linears on an edge are
linear, so two values per edge endpoint determine every term.
"""

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

__all__ = [
    "AssemblyError", "SolverError", "DEFAULT_PENALTY", "DofLayout",
    "assemble_volume_stiffness", "assemble_interface_terms",
    "assemble_operator", "assemble_load", "assemble_load_dirac",
    "broken_energy_norm", "jump_seminorm", "mesh_dependent_norm",
    "l2_norm", "max_vertex_norm", "error_report",
    "solve_spd", "SaddleFactorization", "export_matrix",
]

DEFAULT_PENALTY = 10.0

_DIRECT_LIMIT = 400_000  # beyond this, fall back to algebraic multigrid


class AssemblyError(ValueError):
    """Inconsistent layout, region, or load specification."""


class SolverError(RuntimeError):
    """A linear solve failed its residual check."""


class DofLayout:
    """Degree-of-freedom numbering for the two-block space.

    kind="fine": block 1 = refined-region fine vertices, block 2 = fine
    vertices of the complement.  kind="coarse": block 2 uses the coarse
    vertices instead.  Outer-boundary vertices are eliminated (homogeneous
    Dirichlet); interface vertices are duplicated across the blocks and
    stay free on both sides.
    """

    def __init__(self, part, kind="fine"):
        if kind not in ("fine", "coarse"):
            raise AssemblyError(f"unknown layout kind {kind!r}")
        self.part = part
        self.kind = kind
        self.dof1 = self._number(part.dirichlet1, 0)
        dir2 = part.dirichlet2 if kind == "fine" else part.dirichletH
        self.n1 = int(self.dof1.max(initial=-1)) + 1
        self.dof2 = self._number(dir2, self.n1)
        self.n2 = int(self.dof2.max(initial=self.n1 - 1)) + 1 - self.n1
        self.n = self.n1 + self.n2

    @staticmethod
    def _number(dirichlet, offset):
        dof = np.full(len(dirichlet), -1, dtype=np.int64)
        free = ~np.asarray(dirichlet)
        dof[free] = offset + np.arange(free.sum(), dtype=np.int64)
        dof.setflags(write=False)
        return dof

    @property
    def mesh2(self):
        return self.part.mesh2 if self.kind == "fine" else self.part.mesh2H

    def expand(self, u):
        """Per-vertex value arrays (block 1, block 2) with Dirichlet zeros."""
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        if len(u) != self.n:
            raise AssemblyError(f"vector length {len(u)}, layout size {self.n}")
        v1 = np.zeros(len(self.dof1))
        v2 = np.zeros(len(self.dof2))
        f1 = self.dof1 >= 0
        f2 = self.dof2 >= 0
        v1[f1] = u[self.dof1[f1]]
        v2[f2] = u[self.dof2[f2]]
        return v1, v2

    def restrict(self, v1, v2):
        """Inverse of expand (Dirichlet entries are dropped)."""
        u = np.zeros(self.n)
        f1 = self.dof1 >= 0
        f2 = self.dof2 >= 0
        u[self.dof1[f1]] = np.asarray(v1)[f1]
        u[self.dof2[f2]] = np.asarray(v2)[f2]
        return u


def _coo_accumulate(rows, cols, vals, shape):
    rows = rows.ravel()
    cols = cols.ravel()
    vals = vals.ravel()
    keep = (rows >= 0) & (cols >= 0)
    m = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape)
    return m


def _volume_coo(mesh, coeff, dofmap, shape):
    if mesh.num_triangles == 0:
        return sparse.coo_matrix(shape)
    local = np.einsum("tki,tli->tkl", mesh.grads, mesh.grads)
    local *= (np.asarray(coeff) * mesh.areas)[:, None, None]
    dofs = dofmap[mesh.triangles]
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    return _coo_accumulate(rows, cols, local, shape)


def assemble_volume_stiffness(part, a1, a2, layout):
    """Broken stiffness (A grad u, grad v) for the fine layout.

    a1, a2 are per-triangle coefficient samples on the refined-region mesh
    and the fine complement mesh.
    """
    if layout.kind != "fine":
        raise AssemblyError("volume stiffness is assembled on the fine layout")
    shape = (layout.n, layout.n)
    m = _volume_coo(part.mesh1, a1, layout.dof1, shape)
    m += _volume_coo(part.mesh2, a2, layout.dof2, shape)
    return m.tocsr()


# -- interface terms ----------------------------------------------------------
#
# A "side" bundles, per interface edge, everything one family of basis
# functions contributes: jump sign, dof ids, trace values at the two edge
# endpoints, and the flux constant A (grad phi . n).


def _side_fine1(part, edges, a1, layout):
    t = part.gamma_t1[edges]
    tris = part.mesh1.triangles[t]
    vv = part.gamma_v1[edges]
    a = (tris == vv[:, :1]).astype(np.float64)
    b = (tris == vv[:, 1:2]).astype(np.float64)
    nrm = part.gamma_normal[edges]
    flux = np.asarray(a1)[t][:, None] * np.einsum(
        "eki,ei->ek", part.mesh1.grads[t], nrm)
    return 1.0, layout.dof1[tris], a, b, flux


def _side_fine2(part, edges, a2, layout):
    t = part.gamma_t2[edges]
    tris = part.mesh2.triangles[t]
    vv = part.gamma_v2[edges]
    a = (tris == vv[:, :1]).astype(np.float64)
    b = (tris == vv[:, 1:2]).astype(np.float64)
    nrm = part.gamma_normal[edges]
    flux = np.asarray(a2)[t][:, None] * np.einsum(
        "eki,ei->ek", part.mesh2.grads[t], nrm)
    return -1.0, layout.dof2[tris], a, b, flux


def _side_coarse2(part, edges, a2, layout):
    # traces and fluxes of the coarse hats of the owning coarse element;
    # the flux coefficient is still the fine sample next to the edge so the
    # form agrees exactly with the fine operator applied to injected
    # coarse functions
    T = part.gamma_T[edges]
    meshH = part.mesh2H
    trisH = meshH.triangles[T]
    g = meshH.grads[T]
    vx = meshH.vertices[trisH]
    p = part.gamma_p[edges].astype(np.float64) / part.fine_n
    q = part.gamma_q[edges].astype(np.float64) / part.fine_n
    a = 1.0 + np.einsum("eki,eki->ek", g, p[:, None, :] - vx)
    b = 1.0 + np.einsum("eki,eki->ek", g, q[:, None, :] - vx)
    nrm = part.gamma_normal[edges]
    flux = np.asarray(a2)[part.gamma_t2[edges]][:, None] * np.einsum(
        "eki,ei->ek", g, nrm)
    return -1.0, layout.dof2[trisH], a, b, flux


def _pair_block(ell, pen, side_u, side_v, terms):
    su, du, au, bu, cu = side_u
    sv, dv, av, bv, cv = side_v
    blk = 0.0
    if terms in ("all", "penalty"):
        i2 = (2.0 * au[:, :, None] * av[:, None, :]
              + 2.0 * bu[:, :, None] * bv[:, None, :]
              + au[:, :, None] * bv[:, None, :]
              + av[:, None, :] * bu[:, :, None]) * (ell / 6.0)
        blk = (pen * su * sv) * i2
    if terms in ("all", "flux"):
        i1u = (au + bu) * (ell / 2.0)
        i1v = (av + bv) * (ell / 2.0)
        blk = blk - (0.5 * sv) * cu[:, :, None] * i1v[:, None, :]
        blk = blk - (0.5 * su) * i1u[:, :, None] * cv[:, None, :]
    rows = np.broadcast_to(dv[:, None, :], blk.shape)
    cols = np.broadcast_to(du[:, :, None], blk.shape)
    return rows, cols, blk


def _sides_for(part, edges, kind, a1, a2, layout):
    if kind == "fine":
        return [_side_fine1(part, edges, a1, layout),
                _side_fine2(part, edges, a2, layout)]
    return [_side_fine1(part, edges, a1, layout),
            _side_coarse2(part, edges, a2, layout)]


def assemble_interface_terms(part, a1, a2, layout_u, layout_v=None,
                             edges=None, penalty=DEFAULT_PENALTY,
                             v_sides=None, terms="all"):
    """Interface part of the form, rows = test dofs, cols = trial dofs.

    With layout_v omitted the form is square and assembled so the matrix
    is exactly symmetric: each unordered pair of sides is evaluated once
    and mirrored, and within-side blocks are symmetrized entrywise.
    v_sides="fine2" restricts the test family to the fine complement-side
    traces (used for forms tested only against functions vanishing on the
    refined region).  terms selects "penalty", "flux" (consistency plus
    symmetry), or "all"; edges restricts to a subset of interface edges.
    """
    if terms not in ("all", "penalty", "flux"):
        raise AssemblyError(f"unknown term selection {terms!r}")
    symmetric = layout_v is None and v_sides is None
    layout_v = layout_v if layout_v is not None else layout_u
    if edges is None:
        edges = np.arange(part.num_interface_edges, dtype=np.int64)
    else:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1)
        if len(edges) and (edges.min() < 0
                           or edges.max() >= part.num_interface_edges):
            raise AssemblyError("edge subset out of range")
    shape = (layout_v.n, layout_u.n)
    if len(edges) == 0:
        return sparse.csr_matrix(shape)
    ell = part.h
    pen = penalty / part.h

    u_sides = _sides_for(part, edges, layout_u.kind, a1, a2, layout_u)
    if v_sides == "fine2":
        vs = [_side_fine2(part, edges, a2, layout_v)]
    else:
        vs = _sides_for(part, edges, layout_v.kind, a1, a2, layout_v)

    parts = []
    if symmetric:
        for i in range(len(u_sides)):
            for j in range(i, len(u_sides)):
                rows, cols, blk = _pair_block(ell, pen, u_sides[i], vs[j],
                                              terms)
                if i == j:
                    blk = 0.5 * (blk + blk.swapaxes(1, 2))
                    parts.append((rows, cols, blk))
                else:
                    parts.append((rows, cols, blk))
                    parts.append((cols, rows, blk))
    else:
        for side_u in u_sides:
            for side_v in vs:
                parts.append(_pair_block(ell, pen, side_u, side_v, terms))
    rows = np.concatenate([p[0].ravel() for p in parts])
    cols = np.concatenate([p[1].ravel() for p in parts])
    vals = np.concatenate([p[2].ravel() for p in parts])
    return _coo_accumulate(rows, cols, vals, shape).tocsr()


def assemble_operator(part, a1, a2, layout, penalty=DEFAULT_PENALTY):
    """Full fine-layout operator: broken stiffness plus interface terms."""
    m = assemble_volume_stiffness(part, a1, a2, layout)
    if part.num_interface_edges:
        m = m + assemble_interface_terms(part, a1, a2, layout,
                                         penalty=penalty)
    return m.tocsr()


# -- loads ---------------------------------------------------------------------


def _load_on_mesh(mesh, f, dofmap, out, rule):
    if mesh.num_triangles == 0:
        return
    p = mesh.vertices[mesh.triangles]  # (t, 3, 2)
    if rule == "vertex":
        fv = np.asarray(f(p[:, :, 0], p[:, :, 1]), dtype=np.float64)
        contrib = (mesh.areas / 3.0)[:, None] * fv
    elif rule == "midedge":
        # edge-midpoint rule, exact for quadratics; midpoint m_k is
        # opposite vertex k and carries the average of the other two hats
        mids = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])
        fm = np.asarray(f(mids[:, :, 0], mids[:, :, 1]), dtype=np.float64)
        w = 0.5 * np.stack([fm[:, [1, 2]].sum(axis=1),
                            fm[:, [2, 0]].sum(axis=1),
                            fm[:, [0, 1]].sum(axis=1)], axis=1)
        contrib = (mesh.areas / 3.0)[:, None] * w
    else:
        raise AssemblyError(f"unknown quadrature rule {rule!r}")
    dofs = dofmap[mesh.triangles].ravel()
    keep = dofs >= 0
    np.add.at(out, dofs[keep], contrib.ravel()[keep])


def assemble_load(part, layout, f, rule="vertex"):
    """Load vector for a volume density f(x, y)."""
    out = np.zeros(layout.n)
    _load_on_mesh(part.mesh1, f, layout.dof1, out, rule)
    _load_on_mesh(layout.mesh2, f, layout.dof2, out, rule)
    return out


def assemble_load_dirac(part, layout, points, weights):
    """Load vector for point sources sum_k w_k delta(x - x_k).

    Every source must lie strictly inside a single region: all fine cells
    whose closure contains the point must belong to that region's mesh.
    The refined region is tried first, so combined partitions place the
    sources there; sources on the interface are rejected.
    """
    if layout.kind != "fine":
        raise AssemblyError("point loads require the fine layout")
    out = np.zeros(layout.n)
    n = part.fine_n
    for (x, y), w in zip(np.atleast_2d(np.asarray(points, dtype=np.float64)),
                         np.asarray(weights, dtype=np.float64).ravel()):
        if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
            raise AssemblyError(f"point source ({x}, {y}) outside the domain")
        sx, sy = x * n, y * n
        i0, j0 = int(np.floor(sx)), int(np.floor(sy))
        cand = []
        on_x = abs(sx - round(sx)) < 1e-12
        on_y = abs(sy - round(sy)) < 1e-12
        if on_x:
            i0 = int(round(sx))
        if on_y:
            j0 = int(round(sy))
        for di in ((-1, 0) if on_x else (0,)):
            for dj in ((-1, 0) if on_y else (0,)):
                ci, cj = i0 + di, j0 + dj
                if 0 <= ci < n and 0 <= cj < n:
                    cand.append((ci, cj))
        placed = False
        for mesh, dofmap in ((part.mesh1, layout.dof1),
                             (part.mesh2, layout.dof2)):
            if (mesh.num_triangles == 0
                    or not all(mesh.has_cell([c])[0] for c in cand)):
                continue
            ci, cj = cand[0]
            fa, fb = sx - ci, sy - cj
            lower = fa >= fb
            t = mesh.tri_index([(ci, cj)], [lower])[0]
            lam = (np.array([1.0 - fa, fa - fb, fb]) if lower
                   else np.array([1.0 - fb, fa, fb - fa]))
            dofs = dofmap[mesh.triangles[t]]
            keep = dofs >= 0
            np.add.at(out, dofs[keep], w * lam[keep])
            placed = True
            break
        if not placed:
            raise AssemblyError(
                f"point source ({x}, {y}) is not strictly inside a "
                "single region")
    return out


# -- norms ---------------------------------------------------------------------


def _region_tris(part, region):
    """Triangle masks (refined mesh, fine complement mesh) for a region."""
    n1, n2 = part.mesh1.num_triangles, part.mesh2.num_triangles
    if region == "omega":
        return np.ones(n1, dtype=bool), np.ones(n2, dtype=bool)
    if region == "omega1":
        return np.ones(n1, dtype=bool), np.zeros(n2, dtype=bool)
    if region == "omega2":
        return np.zeros(n1, dtype=bool), np.ones(n2, dtype=bool)
    if hasattr(region, "elements"):  # a coarse Patch
        return np.zeros(n1, dtype=bool), part.tri_in_patch_mask(region)
    raise AssemblyError(f"unknown region {region!r}")


def _energy_on_mesh(mesh, coeff, vals, mask):
    if mesh.num_triangles == 0 or not mask.any():
        return 0.0
    v = vals[mesh.triangles[mask]]
    g = np.einsum("tk,tki->ti", v, mesh.grads[mask])
    return float(np.sum(np.asarray(coeff)[mask] * mesh.areas[mask]
                        * np.einsum("ti,ti->t", g, g)))


def broken_energy_norm(part, a1, a2, layout, u, region="omega"):
    """|| A^(1/2) grad v || over the region, gradients taken per element."""
    if layout.kind != "fine":
        raise AssemblyError("norms are evaluated on the fine layout")
    v1, v2 = layout.expand(u)
    m1, m2 = _region_tris(part, region)
    s = _energy_on_mesh(part.mesh1, a1, v1, m1)
    s += _energy_on_mesh(part.mesh2, a2, v2, m2)
    return float(np.sqrt(s))


def jump_seminorm(part, layout, u, scale="h", penalty=DEFAULT_PENALTY):
    """(penalty / scale)^(1/2)-weighted L2 norm of the interface jump."""
    if part.num_interface_edges == 0:
        return 0.0
    v1, v2 = layout.expand(u)
    if layout.kind != "fine":
        raise AssemblyError("jump seminorm requires the fine layout")
    ja = v1[part.gamma_v1[:, 0]] - v2[part.gamma_v2[:, 0]]
    jb = v1[part.gamma_v1[:, 1]] - v2[part.gamma_v2[:, 1]]
    ell = part.h
    s = ell * np.sum(ja * ja + ja * jb + jb * jb) / 3.0
    den = part.h if scale == "h" else part.H
    return float(np.sqrt(penalty / den * s))


def mesh_dependent_norm(part, a1, a2, layout, u, scale="h",
                        penalty=DEFAULT_PENALTY):
    """Broken energy norm plus the scaled interface jump."""
    e = broken_energy_norm(part, a1, a2, layout, u)
    j = jump_seminorm(part, layout, u, scale=scale, penalty=penalty)
    return float(np.sqrt(e * e + j * j))


def _l2_on_mesh(mesh, vals, mask):
    if mesh.num_triangles == 0 or not mask.any():
        return 0.0
    v = vals[mesh.triangles[mask]]
    s = v.sum(axis=1)
    return float(np.sum(mesh.areas[mask] / 12.0
                        * ((v * v).sum(axis=1) + s * s)))


def l2_norm(part, layout, u, region="omega"):
    v1, v2 = layout.expand(u)
    if layout.kind != "fine":
        raise AssemblyError("norms are evaluated on the fine layout")
    m1, m2 = _region_tris(part, region)
    s = _l2_on_mesh(part.mesh1, v1, m1) + _l2_on_mesh(part.mesh2, v2, m2)
    return float(np.sqrt(s))


def max_vertex_norm(part, layout, u, region="omega"):
    v1, v2 = layout.expand(u)
    if layout.kind != "fine":
        raise AssemblyError("norms are evaluated on the fine layout")
    m1, m2 = _region_tris(part, region)
    best = 0.0
    if m1.any():
        best = max(best, float(np.abs(v1[np.unique(part.mesh1.triangles[m1])]).max()))
    if m2.any():
        best = max(best, float(np.abs(v2[np.unique(part.mesh2.triangles[m2])]).max()))
    return best


def error_report(part, a1, a2, layout, u_ref, u, regions=("omega", "omega1", "omega2")):
    """Relative errors of u against u_ref per region and norm.

    Returns {region: {norm: value}} with norms energy/l2/linf; absolute
    errors are reported under *_abs.  A zero reference norm makes the
    relative entry inf (or 0 when the error is zero too).
    """
    du = np.asarray(u_ref) - np.asarray(u)
    out = {}
    for region in regions:
        if region == "omega1" and part.mesh1.num_triangles == 0:
            continue
        row = {}
        for name, fn in (("energy", lambda w, r: broken_energy_norm(
                              part, a1, a2, layout, w, region=r)),
                         ("l2", lambda w, r: l2_norm(part, layout, w, region=r)),
                         ("linf", lambda w, r: max_vertex_norm(
                              part, layout, w, region=r))):
            num = fn(du, region)
            den = fn(u_ref, region)
            row[name + "_abs"] = num
            if den == 0.0:
                row[name] = 0.0 if num == 0.0 else float("inf")
            else:
                row[name] = num / den
        out[region] = row
    return out


# -- linear solvers -------------------------------------------------------------


def _matrix_norm1(m):
    return float(np.max(np.abs(m).sum(axis=0))) if m.nnz else 0.0


def _check_residual(m, x, b, what):
    """Verify the normwise backward error ||Ax-b|| / (||b|| + ||A|| ||x||).

    Scaling by ||A|| ||x|| rather than ||b|| alone is what float64 can
    certify: for high-contrast coefficients the matvec rounding noise
    alone exceeds 1e-10 ||b||.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return
    scale = bnorm + _matrix_norm1(m) * float(np.linalg.norm(x))
    r = float(np.linalg.norm(m @ x - b))
    if not np.isfinite(r) or r > 1e-10 * scale:
        raise SolverError(f"{what}: relative residual {r / scale:.3e} "
                          "exceeds 1e-10")


def solve_spd(m, b):
    """Solve a symmetric positive definite sparse system.

    Uses a sparse LU up to a size limit, then preconditioned CG with an
    algebraic multigrid hierarchy.  Every solve is verified to a relative
    residual of 1e-10.
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if m.shape[0] != len(b):
        raise AssemblyError("matrix/vector size mismatch")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    # Iterative refinement recovers the last digits on ill-conditioned
    # high-contrast systems, where one factored solve stalls early.
    n1 = _matrix_norm1(m)
    if m.shape[0] <= _DIRECT_LIMIT:
        lu = spla.splu(m.tocsc())
        x = lu.solve(b)
        for _ in range(2):
            r = b - m @ x
            if float(np.linalg.norm(r)) <= 1e-13 * (
                    bnorm + n1 * float(np.linalg.norm(x))):
                break
            x = x + lu.solve(r)
    else:
        import pyamg
        ml = pyamg.smoothed_aggregation_solver(m.tocsr(), max_coarse=500)
        x = ml.solve(b, tol=1e-12, accel="cg", maxiter=400)
        for _ in range(2):
            r = b - m @ x
            if float(np.linalg.norm(r)) <= 1e-13 * (
                    bnorm + n1 * float(np.linalg.norm(x))):
                break
            x = x + ml.solve(r, tol=1e-6, accel="cg", maxiter=400)
    _check_residual(m, x, b, "spd solve")
    return x


class SaddleFactorization:
    """LU factorization of the saddle system [[A, B^T], [B, 0]].

    Solves constrained quadratic problems: minimize (1/2) x^T A x - r^T x
    subject to B x = 0.  The solve accepts one rhs vector or a dense
    matrix of stacked rhs columns and returns only the primal part.
    """

    def __init__(self, a, b_rows):
        a = a.tocsc()
        b_rows = b_rows.tocsc()
        if b_rows.shape[1] != a.shape[0]:
            raise AssemblyError("constraint matrix width mismatch")
        self.n = a.shape[0]
        self.m = b_rows.shape[0]
        self._a = a
        self._b = b_rows
        k = sparse.bmat([[a, b_rows.T], [b_rows, None]], format="csc")
        self._k = k
        self._k1 = _matrix_norm1(k)
        self._lu = spla.splu(k)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=np.float64)
        one = rhs.ndim == 1
        r = rhs.reshape(self.n, -1) if not one else rhs.reshape(self.n, 1)
        full = np.vstack([r, np.zeros((self.m, r.shape[1]))])
        xy = self._lu.solve(full)
        # Refinement, as in solve_spd: high-contrast patch systems leave
        # a first factored solve a couple of digits short.
        for _ in range(2):
            resid = full - self._k @ xy
            scale = (np.linalg.norm(full, axis=0)
                     + self._k1 * np.linalg.norm(xy, axis=0))
            if np.all(np.linalg.norm(resid, axis=0)
                      <= 1e-13 * np.maximum(scale, 1e-300)):
                break
            xy = xy + self._lu.solve(resid)
        x, y = xy[:self.n], xy[self.n:]
        for j in range(r.shape[1]):
            bn = float(np.linalg.norm(r[:, j]))
            if bn == 0.0:
                x[:, j] = 0.0
                continue
            scale = bn + self._k1 * float(np.linalg.norm(xy[:, j]))
            res = float(np.linalg.norm(self._a @ x[:, j] + self._b.T @ y[:, j]
                                       - r[:, j]))
            res = max(res, float(np.linalg.norm(self._b @ x[:, j])))
            if not np.isfinite(res) or res > 1e-10 * scale:
                raise SolverError(
                    f"saddle solve: relative residual {res / scale:.3e} "
                    "exceeds 1e-10")
        return x[:, 0] if one else x


def export_matrix(m, stream):
    """Lower triangle of a symmetric sparse matrix as "i j value" lines."""
    c = sparse.tril(m.tocoo())
    order = np.lexsort((c.col, c.row))
    for r, cc, v in zip(c.row[order], c.col[order], c.data[order]):
        stream.write(f"{r} {cc} {v:.16e}\n")
