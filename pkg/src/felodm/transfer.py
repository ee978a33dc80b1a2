"""Transfer operators between the two-block spaces.

Three ingredients couple the fine space to the combined fine/coarse one:

* a weighted Clement quasi-interpolation on the coarse complement region,
  node weight u_z = (u, phi_z) / (1, phi_z) with phi_z the coarse hat;
* the constraint matrix whose kernel (together with a structural zero on
  the refined region) is the fine-scale remainder space the correctors
  live in;
* the nodal injection of combined fine/coarse functions into the fine
  space, exact on each coarse element.

All integrals are exact: coarse hats restricted to fine triangles are
affine, so products against fine hats reduce to the fine P1 mass matrix.
"""

import numpy as np
from scipy import sparse

from .assembly import AssemblyError

__all__ = [
    "ClementWeights", "build_clement_weights", "clement_interpolate",
    "l2_project_fine", "l2_project_function",
    "apply_quasi_interpolation", "build_injection",
    "patch_interior_dofs", "constraint_rows",
]


class ClementWeights:
    """Constraint matrix B and node measures for the Clement weights.

    B has one row per free coarse node z and one column per global fine
    dof; row z of B v equals (v, phi_z) over the complement region, and
    measures[z] = (1, phi_z).  Weights are (B v) / measures.
    """

    def __init__(self, b, measures, rows_to_coarse_vertex):
        self.b = b
        self.measures = measures
        self.rows_to_coarse_vertex = rows_to_coarse_vertex


def _coarse_hat_values(part):
    """lam[t, i, k]: value of coarse hat k of parent(t) at fine vertex i of
    fine complement triangle t."""
    meshH = part.mesh2H
    mesh2 = part.mesh2
    T = part.parent
    g = meshH.grads[T]                      # (t, 3, 2)
    vx = meshH.vertices[meshH.triangles[T]]  # (t, 3, 2)
    fx = mesh2.vertices[mesh2.triangles]     # (t, 3, 2)
    return 1.0 + np.einsum("tkd,tikd->tik",
                           g, fx[:, :, None, :] - vx[:, None, :, :])


def build_clement_weights(part, layout_fine):
    """Assemble the Clement constraint matrix for a fine layout."""
    meshH = part.mesh2H
    mesh2 = part.mesh2
    free = ~np.asarray(part.dirichletH)
    row_of_vertex = np.full(meshH.num_vertices, -1, dtype=np.int64)
    verts = np.flatnonzero(free)
    row_of_vertex[verts] = np.arange(len(verts))
    nrows = len(verts)

    lam = _coarse_hat_values(part)              # (t, 3, 3): i fine, k coarse
    s = lam.sum(axis=1)                         # (t, 3): sum over fine verts
    coarse_vs = meshH.triangles[part.parent]    # (t, 3)
    rows3 = row_of_vertex[coarse_vs]            # (t, 3)
    area = mesh2.areas

    # (u, phi_z) = sum_t area/12 * sum_i u_i (lam_ik + s_k)
    entries = area[:, None, None] / 12.0 * (lam + s[:, None, :])
    cols3 = layout_fine.dof2[mesh2.triangles]   # (t, 3)
    rows = np.broadcast_to(rows3[:, None, :], entries.shape).ravel()
    cols = np.broadcast_to(cols3[:, :, None], entries.shape).ravel()
    vals = entries.ravel()
    keep = (rows >= 0) & (cols >= 0)
    b = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(nrows, layout_fine.n)).tocsr()

    meas = np.zeros(nrows)
    mcontrib = (area[:, None] / 3.0) * s
    mr = rows3.ravel()
    mk = mr >= 0
    np.add.at(meas, mr[mk], mcontrib.ravel()[mk])
    if nrows and meas.min() <= 0.0:
        raise AssemblyError("degenerate Clement node measure")
    return ClementWeights(b, meas, verts)


def clement_interpolate(weights, v):
    """Node weights (v, phi_z) / (1, phi_z) of a fine-layout vector, one
    value per free coarse node."""
    return (weights.b @ np.asarray(v, dtype=np.float64)) / weights.measures


def apply_quasi_interpolation(part, weights, layout_fine, layout_coarse, v):
    """Quasi-interpolation from the fine layout to the combined layout:
    the refined-region block is kept, the complement is replaced by the
    Clement weights."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    out = np.zeros(layout_coarse.n)
    out[:layout_coarse.n1] = v[:layout_fine.n1]
    w = clement_interpolate(weights, v)
    dofs = layout_coarse.dof2[weights.rows_to_coarse_vertex]
    keep = dofs >= 0
    out[dofs[keep]] = w[keep]
    return out


def l2_project_fine(part, v1):
    """Projection of refined-region fine coefficients onto themselves.

    The interpolation target on the refined region is the same P1 space,
    so the L2 projection is the identity; kept as an explicit operation
    for symmetry with the coarse-side interpolation."""
    if len(np.asarray(v1)) != part.mesh1.num_vertices:
        raise AssemblyError("expected per-vertex refined-region values")
    return np.array(v1, dtype=np.float64)


def l2_project_function(part, layout_fine, f):
    """L2 projection of a function onto the refined-region P1 space, as
    free-dof coefficients.  The right-hand side integrates f's nodal
    interpolant exactly, so inputs already in the space are reproduced up
    to solver tolerance."""
    from .assembly import solve_spd
    mesh = part.mesh1
    if mesh.num_triangles == 0:
        return np.zeros(0)
    tris = mesh.triangles
    local = mesh.areas[:, None, None] / 12.0 * (
        np.ones((1, 3, 3)) + np.eye(3)[None])
    dofs = layout_fine.dof1[tris]
    rows = np.broadcast_to(dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], local.shape).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n1 = layout_fine.n1
    m = sparse.coo_matrix((local.ravel()[keep], (rows[keep], cols[keep])),
                          shape=(n1, n1)).tocsr()
    p = mesh.vertices[tris]
    fv = np.asarray(f(p[:, :, 0], p[:, :, 1]), dtype=np.float64)
    b = np.zeros(n1)
    contrib = mesh.areas[:, None] / 12.0 * (fv + fv.sum(axis=1)[:, None])
    flat = dofs.ravel()
    k = flat >= 0
    np.add.at(b, flat[k], contrib.ravel()[k])
    return solve_spd(m, b)


def build_injection(part, layout_fine, layout_coarse):
    """Sparse injection P (fine dofs x combined dofs): the refined-region
    block is the identity, each free fine vertex of the complement gets
    the coarse nodal interpolation from one containing complement coarse
    cell."""
    if layout_fine.n1 != layout_coarse.n1:
        raise AssemblyError("layouts disagree on the refined region")
    rows, cols, vals = [], [], []
    k1 = np.flatnonzero(layout_fine.dof1 >= 0)
    rows.append(layout_fine.dof1[k1])
    cols.append(layout_coarse.dof1[k1])
    vals.append(np.ones(len(k1)))

    meshH = part.mesh2H
    NH, r = part.coarse_n, part.ratio
    hascell = np.zeros((NH, NH), dtype=bool)
    hascell[meshH.cells[:, 0], meshH.cells[:, 1]] = True

    free2 = np.flatnonzero(layout_fine.dof2 >= 0)
    if len(free2):
        ij = part.mesh2.grid[free2]
        a, b = ij[:, 0] % r, ij[:, 1] % r
        ci, cj = ij[:, 0] // r, ij[:, 1] // r

        def usable(cx, cy, allow):
            ok = allow & (cx >= 0) & (cy >= 0) & (cx < NH) & (cy < NH)
            out = np.zeros(len(cx), dtype=bool)
            out[ok] = hascell[cx[ok], cy[ok]]
            return out

        # a vertex on a coarse cell edge belongs to several cells; take the
        # first complement cell in a fixed order so the choice is
        # deterministic (all choices interpolate identically)
        cell_i, cell_j = ci.copy(), cj.copy()
        found = usable(ci, cj, np.ones(len(ci), dtype=bool))
        for di, dj, allow in ((-1, 0, a == 0), (0, -1, b == 0),
                              (-1, -1, (a == 0) & (b == 0))):
            need = ~found
            ok = usable(ci + di, cj + dj, allow & need)
            cell_i[ok], cell_j[ok] = ci[ok] + di, cj[ok] + dj
            found |= ok
        if not found.all():
            raise AssemblyError("fine complement vertex has no complement "
                                "coarse cell")

        fa = (ij[:, 0] - cell_i * r) / r
        fb = (ij[:, 1] - cell_j * r) / r
        lower = fa >= fb
        t = meshH.tri_index(np.stack([cell_i, cell_j], axis=1), lower)
        lam = np.where(lower[:, None],
                       np.stack([1.0 - fa, fa - fb, fb], axis=1),
                       np.stack([1.0 - fb, fa, fb - fa], axis=1))
        dofs = layout_coarse.dof2[meshH.triangles[t]]
        keep = (dofs >= 0) & (lam != 0.0)
        rr = np.broadcast_to(layout_fine.dof2[free2][:, None], dofs.shape)
        rows.append(rr[keep])
        cols.append(dofs[keep])
        vals.append(lam[keep])
    return sparse.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(layout_fine.n, layout_coarse.n)).tocsr()


def patch_interior_dofs(part, layout_fine, patch):
    """Fine dofs of the remainder-space carrier inside a coarse patch:
    complement fine vertices all of whose incident complement triangles
    have their parent in the patch."""
    pm = np.zeros(part.mesh2H.num_triangles, dtype=np.int64)
    pm[patch.elements] = 1
    in_patch = pm[part.parent]  # per fine complement triangle
    hits = part._vt2 @ in_patch
    interior = (hits == part._vt2_degree) & (part._vt2_degree > 0)
    verts = np.flatnonzero(interior & (layout_fine.dof2 >= 0))
    return layout_fine.dof2[verts]


def constraint_rows(part, weights, cols=None):
    """Clement constraint matrix, optionally sliced to patch columns with
    identically satisfied rows dropped."""
    b = weights.b
    if cols is None:
        return b
    bp = b[:, cols].tocsr()
    nnz = np.diff(bp.indptr)
    keep = np.flatnonzero(nnz > 0)
    return bp[keep]
