"""Structured triangulations and fine/coarse domain partitions.

All meshes are uniform right-triangle meshes obtained by splitting the
square cells of a lattice along the main diagonal (lower-left to
upper-right).  Topology is computed on integer lattice coordinates, so
nestedness of dyadic refinements and the tiling of the refinement
interface are exact by construction, not up to a tolerance.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeshError", "Domain", "UNIT_SQUARE", "L_SHAPE", "TriMesh",
    "build_uniform_tri_mesh", "DomainPartition", "partition_domain",
    "Patch", "element_patch", "CombinedElement", "combined_element",
    "export_mesh", "export_partition",
]

_CORNERS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=np.int64)


class MeshError(ValueError):
    """Invalid mesh, partition, or patch request."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Domain:
    """Axis-aligned domain: the unit square, or the L-shape obtained by
    removing the lower-right quadrant (1/2,1)x(0,1/2)."""

    lshape: bool = False

    @property
    def name(self):
        return "l-shape" if self.lshape else "unit-square"

    def check_resolution(self, n):
        if n < 1:
            raise MeshError("subdivision count must be >= 1")
        if self.lshape and n % 2:
            raise MeshError(
                "L-shape needs an even subdivision count so the reentrant "
                "corner lies on a lattice vertex")

    def cell_mask(self, n):
        """Boolean (n, n) array, mask[i, j] true when cell (i, j) is kept."""
        self.check_resolution(n)
        mask = np.ones((n, n), dtype=bool)
        if self.lshape:
            m = n // 2
            mask[m:, :m] = False
        return mask

    def on_boundary(self, grid, n):
        """Outer-boundary flags for lattice points at resolution n."""
        grid = np.asarray(grid).reshape(-1, 2)
        i, j = grid[:, 0], grid[:, 1]
        if not self.lshape:
            return (i == 0) | (i == n) | (j == 0) | (j == n)
        m = n // 2
        out = (i == 0) | (j == n)
        out |= (j == 0) & (i <= m)
        out |= (i == n) & (j >= m)
        # reentrant edges of the removed quadrant
        out |= (i == m) & (j <= m)
        out |= (j == m) & (i >= m)
        return out


UNIT_SQUARE = Domain(False)
L_SHAPE = Domain(True)


def _dyadic_level(value, name):
    if not (0 < value < 1):
        raise MeshError(f"{name}={value} must lie in (0, 1)")
    k = round(-math.log2(value))
    if k < 1 or 2.0 ** (-k) != value:
        raise MeshError(f"{name}={value} is not of the form 2^-k")
    return k


def _rect_cells(rect, n):
    """Cell index bounds of an axis-aligned rectangle on the 1/n lattice."""
    if len(rect) != 4:
        raise MeshError(f"rectangle {rect!r} must be (x0, y0, x1, y1)")
    out = []
    for v in rect:
        s = v * n
        r = round(s)
        if abs(s - r) > 1e-9:
            raise MeshError(f"rectangle {rect} is not aligned to the 1/{n} grid")
        out.append(int(r))
    i0, j0, i1, j1 = out
    if not (0 <= i0 < i1 <= n and 0 <= j0 < j1 <= n):
        raise MeshError(f"rectangle {rect} is degenerate or leaves the unit square")
    return i0, j0, i1, j1


class TriMesh:
    """Immutable structured triangle mesh on the lattice of resolution n.

    Each retained lattice cell is split into a lower-right triangle
    (v00, v10, v11) and an upper-left triangle (v00, v11, v01).  Vertices
    are ordered by lattice key j*(n+1)+i; triangles are ordered by cell
    (row-major in j, then i), lower before upper.
    """

    def __init__(self, n, cells):
        n = int(n)
        if n < 1:
            raise MeshError("resolution must be positive")
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if len(cells) and (cells.min() < 0 or cells.max() >= n):
            raise MeshError("cell indices out of range")
        order = np.argsort(cells[:, 1] * n + cells[:, 0], kind="stable")
        cells = cells[order]
        self.n = n
        self.cells = _frozen(cells)
        self._ckeys = _frozen(cells[:, 1] * n + cells[:, 0])
        if len(self._ckeys) > 1 and np.any(np.diff(self._ckeys) == 0):
            raise MeshError("duplicate cells")

        nvk = n + 1
        corners = cells[:, None, :] + _CORNERS[None, :, :]
        keys = corners[:, :, 1] * nvk + corners[:, :, 0]
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        inv = inv.reshape(-1, 4)
        self._vkeys = _frozen(uniq)
        grid = np.stack([uniq % nvk, uniq // nvk], axis=1)
        self.grid = _frozen(grid)
        self.vertices = _frozen(grid.astype(np.float64) / n)

        v00, v10, v01, v11 = (inv[:, k] for k in range(4))
        nt = 2 * len(cells)
        tris = np.empty((nt, 3), dtype=np.int64)
        tris[0::2] = np.stack([v00, v10, v11], axis=1)
        tris[1::2] = np.stack([v00, v11, v01], axis=1)
        self.triangles = _frozen(tris)
        self.tri_cell = _frozen(np.repeat(cells, 2, axis=0))
        lower = np.zeros(nt, dtype=bool)
        lower[0::2] = True
        self.tri_lower = _frozen(lower)

        self._build_edges()
        self._build_geometry()

    # -- construction helpers -------------------------------------------------

    def _build_edges(self):
        tris = self.triangles
        nv = len(self.grid)
        if len(tris) == 0:
            self.edges = _frozen(np.empty((0, 2), dtype=np.int64))
            self.edge_tris = _frozen(np.empty((0, 2), dtype=np.int64))
            self.boundary_vertex = _frozen(np.zeros(nv, dtype=bool))
            return
        e = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        es = np.sort(e, axis=1)
        ekey = es[:, 0] * np.int64(nv) + es[:, 1]
        order = np.argsort(ekey, kind="stable")
        sk = ekey[order]
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
        counts = np.diff(np.r_[starts, len(sk)])
        if counts.max(initial=1) > 2:
            raise MeshError("non-manifold edge")
        tri_of = order // 3
        edges = es[order[starts]]
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_tris[:, 0] = tri_of[starts]
        two = counts == 2
        edge_tris[two, 1] = tri_of[starts[two] + 1]
        self.edges = _frozen(edges)
        self.edge_tris = _frozen(edge_tris)
        bnd = np.zeros(nv, dtype=bool)
        bnd[edges[~two].ravel()] = True
        self.boundary_vertex = _frozen(bnd)

    def _build_geometry(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if len(det) and det.min() <= 0:
            raise MeshError("non-positive triangle area")
        self.areas = _frozen(det / 2.0)
        g = np.empty((len(det), 3, 2))
        for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            e = p[:, b] - p[:, a]
            g[:, k, 0] = -e[:, 1]
            g[:, k, 1] = e[:, 0]
        if len(det):
            g /= det[:, None, None]
        self.grads = _frozen(g)

    # -- lookups ---------------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.grid)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def vertex_index(self, grid_pts):
        """Vertex ids of lattice points; raises if a point is not a vertex."""
        grid_pts = np.asarray(grid_pts, dtype=np.int64).reshape(-1, 2)
        keys = grid_pts[:, 1] * np.int64(self.n + 1) + grid_pts[:, 0]
        idx = np.searchsorted(self._vkeys, keys)
        idx_c = np.minimum(idx, max(len(self._vkeys) - 1, 0))
        if len(self._vkeys) == 0 or not np.all(self._vkeys[idx_c] == keys):
            raise MeshError("lattice point is not a mesh vertex")
        return idx_c

    def has_cell(self, cells):
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        keys = cells[:, 1] * np.int64(self.n) + cells[:, 0]
        idx = np.searchsorted(self._ckeys, keys)
        idx_c = np.minimum(idx, max(len(self._ckeys) - 1, 0))
        if len(self._ckeys) == 0:
            return np.zeros(len(cells), dtype=bool)
        inside = (cells >= 0).all(axis=1) & (cells < self.n).all(axis=1)
        return inside & (self._ckeys[idx_c] == keys)

    def tri_index(self, cells, lower):
        """Triangle ids for (cell, lower/upper) pairs."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        lower = np.asarray(lower, dtype=bool).reshape(-1)
        keys = cells[:, 1] * np.int64(self.n) + cells[:, 0]
        idx = np.searchsorted(self._ckeys, keys)
        idx_c = np.minimum(idx, max(len(self._ckeys) - 1, 0))
        if len(self._ckeys) == 0 or not np.all(self._ckeys[idx_c] == keys):
            raise MeshError("cell is not part of the mesh")
        return 2 * idx_c + (~lower)

    def vertex_tri_matrix(self):
        """Sparse 0/1 incidence (num_vertices x num_triangles)."""
        from scipy import sparse
        nt = self.num_triangles
        rows = self.triangles.ravel()
        cols = np.repeat(np.arange(nt, dtype=np.int64), 3)
        data = np.ones(3 * nt, dtype=np.int64)
        return sparse.csr_matrix((data, (rows, cols)),
                                 shape=(self.num_vertices, nt))


def build_uniform_tri_mesh(domain, n):
    """Uniform right-triangle mesh of the domain at resolution n."""
    mask = domain.cell_mask(int(n))
    cells = np.argwhere(mask)
    return TriMesh(n, cells)


@dataclass(frozen=True)
class Patch:
    """Coarse element patch: all coarse triangles within L rounds of
    vertex adjacency from the seed element."""

    seed: int
    level: int
    elements: np.ndarray  # sorted coarse triangle ids

    @property
    def key(self):
        return self.elements.tobytes()


@dataclass(frozen=True)
class CombinedElement:
    """A coarse interface element together with the fine refined-region
    triangles whose whole interface trace lies on its segment."""

    coarse_element: int
    fine_omega1_elements: np.ndarray
    gamma_edges: np.ndarray  # indices into the partition interface arrays


class DomainPartition:
    """Two-region split of a domain: a refined region (union of coarse-grid
    aligned rectangles, meshed at the fine size h) and its complement
    (meshed at both h and the coarse size H), plus the interface data
    coupling them.

    The refined-region rectangle list may be empty, in which case the
    partition degenerates to a single coarse region covering the whole
    domain (no interface).
    """

    def __init__(self, domain, omega1_rects, H, h):
        kH = _dyadic_level(H, "H")
        kh = _dyadic_level(h, "h")
        if kh <= kH:
            raise MeshError("fine size h must be strictly smaller than H")
        self.domain = domain
        self.H = float(H)
        self.h = float(h)
        self.ratio = 2 ** (kh - kH)
        NH, nh = 2 ** kH, 2 ** kh
        self.coarse_n, self.fine_n = NH, nh
        domain.check_resolution(NH)

        mask_dom_H = domain.cell_mask(NH)
        mask1_H = np.zeros_like(mask_dom_H)
        rects = tuple(tuple(float(v) for v in r) for r in omega1_rects)
        self.omega1_rects = rects
        for rect in rects:
            i0, j0, i1, j1 = _rect_cells(rect, NH)
            mask1_H[i0:i1, j0:j1] = True
        if np.any(mask1_H & ~mask_dom_H):
            raise MeshError("refined region leaves the domain")
        # mask2_H may be empty: the refined region covering the whole domain
        # degenerates the method to a plain fine FEM, which is a useful check.
        mask2_H = mask_dom_H & ~mask1_H

        r = self.ratio
        expand = np.ones((r, r), dtype=bool)
        mask1_h = np.kron(mask1_H, expand)
        mask2_h = np.kron(mask2_H, expand)

        self.mesh1 = TriMesh(nh, np.argwhere(mask1_h))
        self.mesh2 = TriMesh(nh, np.argwhere(mask2_h))
        self.mesh2H = TriMesh(NH, np.argwhere(mask2_H))

        self._build_parent()
        self._build_interface(mask1_h, mask2_h)

        self.dirichlet1 = _frozen(domain.on_boundary(self.mesh1.grid, nh))
        self.dirichlet2 = _frozen(domain.on_boundary(self.mesh2.grid, nh))
        self.dirichletH = _frozen(domain.on_boundary(self.mesh2H.grid, NH))

        # incidence structures used for patches and kernel-space carriers
        self._vt2 = self.mesh2.vertex_tri_matrix()
        self._vt2_degree = _frozen(np.asarray(self._vt2.sum(axis=1)).ravel())
        self._vtH = self.mesh2H.vertex_tri_matrix()

    # -- parent map ------------------------------------------------------------

    def _build_parent(self):
        r = self.ratio
        cells = self.mesh2.tri_cell
        lower = self.mesh2.tri_lower
        if len(cells) == 0:
            self.parent = _frozen(np.empty(0, dtype=np.int64))
            return
        C = cells // r
        a = cells[:, 0] % r
        b = cells[:, 1] % r
        parent_lower = np.where(lower, a >= b, a > b)
        self.parent = _frozen(self.mesh2H.tri_index(C, parent_lower))

    # -- interface -------------------------------------------------------------

    def _build_interface(self, m1, m2):
        nh = self.fine_n
        pieces = []  # (P grid, axis, omega1_cell, lower1, omega2_cell, lower2, normal)

        def collect(i_arr, j_arr, axis, c1_off, low1, c2_off, low2, normal):
            if len(i_arr) == 0:
                return
            base = np.stack([i_arr, j_arr], axis=1)
            pieces.append((base, axis,
                           base + c1_off, low1, base + c2_off, low2, normal))

        # vertical interface lines between cells (i, j) and (i+1, j)
        a = m1[:-1, :] & m2[1:, :]
        idx = np.argwhere(a)
        if len(idx):
            # edge on line x=i+1 from (i+1, j) to (i+1, j+1);
            # side 1 is the lower triangle of cell (i, j) (its right edge),
            # side 2 the upper triangle of cell (i+1, j) (its left edge)
            collect(idx[:, 0] + 1, idx[:, 1], 1,
                    np.array([-1, 0]), True, np.array([0, 0]), False,
                    (1.0, 0.0))
        a = m2[:-1, :] & m1[1:, :]
        idx = np.argwhere(a)
        if len(idx):
            collect(idx[:, 0] + 1, idx[:, 1], 1,
                    np.array([0, 0]), False, np.array([-1, 0]), True,
                    (-1.0, 0.0))
        # horizontal interface lines between cells (i, j) and (i, j+1)
        a = m1[:, :-1] & m2[:, 1:]
        idx = np.argwhere(a)
        if len(idx):
            # edge on line y=j+1 from (i, j+1) to (i+1, j+1);
            # side 1: upper triangle of (i, j) (top edge),
            # side 2: lower triangle of (i, j+1) (bottom edge)
            collect(idx[:, 0], idx[:, 1] + 1, 0,
                    np.array([0, -1]), False, np.array([0, 0]), True,
                    (0.0, 1.0))
        a = m2[:, :-1] & m1[:, 1:]
        idx = np.argwhere(a)
        if len(idx):
            collect(idx[:, 0], idx[:, 1] + 1, 0,
                    np.array([0, 0]), True, np.array([0, -1]), False,
                    (0.0, -1.0))

        if not pieces:
            z2 = _frozen(np.empty((0, 2), dtype=np.int64))
            zf = _frozen(np.empty(0, dtype=np.int64))
            self.gamma_p = self.gamma_q = z2
            self.gamma_v1 = self.gamma_v2 = z2
            self.gamma_t1 = self.gamma_t2 = self.gamma_T = zf
            self.gamma_seg = zf
            self.gamma_normal = _frozen(np.empty((0, 2)))
            self.segments = []
            self._seg_order = zf
            self._seg_starts = zf
            self._edges_by_T = {}
            return

        P = np.concatenate([p[0] for p in pieces])
        axis = np.concatenate([np.full(len(p[0]), p[1], dtype=np.int64)
                               for p in pieces])
        c1 = np.concatenate([p[2] for p in pieces])
        low1 = np.concatenate([np.full(len(p[0]), p[3]) for p in pieces])
        c2 = np.concatenate([p[4] for p in pieces])
        low2 = np.concatenate([np.full(len(p[0]), p[5]) for p in pieces])
        nrm = np.concatenate([np.tile(np.asarray(p[6]), (len(p[0]), 1))
                              for p in pieces])

        # deterministic global order: by (axis, line coordinate, offset)
        line = np.where(axis == 1, P[:, 0], P[:, 1])
        off = np.where(axis == 1, P[:, 1], P[:, 0])
        order = np.lexsort((off, line, axis))
        P, axis, c1, low1, c2, low2, nrm = (
            arr[order] for arr in (P, axis, c1, low1, c2, low2, nrm))

        step = np.zeros_like(P)
        step[axis == 1, 1] = 1
        step[axis == 0, 0] = 1
        Q = P + step

        self.gamma_p = _frozen(P)
        self.gamma_q = _frozen(Q)
        self.gamma_normal = _frozen(nrm)
        self.gamma_t1 = _frozen(self.mesh1.tri_index(c1, low1))
        self.gamma_t2 = _frozen(self.mesh2.tri_index(c2, low2))
        self.gamma_T = _frozen(self.parent[self.gamma_t2])
        v1 = np.stack([self.mesh1.vertex_index(P), self.mesh1.vertex_index(Q)],
                      axis=1)
        v2 = np.stack([self.mesh2.vertex_index(P), self.mesh2.vertex_index(Q)],
                      axis=1)
        self.gamma_v1 = _frozen(v1)
        self.gamma_v2 = _frozen(v2)

        # coarse interface segments: group fine edges by (coarse element,
        # axis, lattice line); each group must tile one coarse element edge
        r = self.ratio
        line_at = np.where(axis == 1, P[:, 0], P[:, 1])
        off_at = np.where(axis == 1, P[:, 1], P[:, 0])
        skey = (self.gamma_T * np.int64(2) + axis) * np.int64(self.fine_n + 1) + line_at
        sorder = np.argsort(skey, kind="stable")
        sk = skey[sorder]
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
        seg_of_sorted = np.cumsum(np.r_[0, sk[1:] != sk[:-1]])
        seg = np.empty(len(sk), dtype=np.int64)
        seg[sorder] = seg_of_sorted
        self.gamma_seg = _frozen(seg)
        segments = []
        bounds = np.r_[starts, len(sk)]
        for s in range(len(starts)):
            ids = sorder[bounds[s]:bounds[s + 1]]
            offs = off_at[ids]
            lo, hi = int(offs.min()), int(offs.max()) + 1
            if len(ids) != r or hi - lo != r:
                raise MeshError("interface segment does not tile a coarse edge")
            segments.append({
                "element": int(self.gamma_T[ids[0]]),
                "axis": int(axis[ids[0]]),
                "line": int(line_at[ids[0]]),
                "span": (lo, hi),
                "edges": _frozen(np.sort(ids)),
            })
        self.segments = segments

        torder = np.argsort(self.gamma_T, kind="stable")
        tk = self.gamma_T[torder]
        tstarts = np.flatnonzero(np.r_[True, tk[1:] != tk[:-1]])
        tb = np.r_[tstarts, len(tk)]
        self._edges_by_T = {
            int(tk[tstarts[s]]): _frozen(np.sort(torder[tb[s]:tb[s + 1]]))
            for s in range(len(tstarts))
        }

    # -- queries ---------------------------------------------------------------

    @property
    def num_interface_edges(self):
        return len(self.gamma_t1)

    def interface_elements(self):
        """Sorted coarse element ids with a nonempty interface segment."""
        return np.array(sorted(self._edges_by_T), dtype=np.int64)

    def edges_of_coarse(self, T):
        return self._edges_by_T.get(int(T),
                                    np.empty(0, dtype=np.int64))

    def tri_in_patch_mask(self, patch):
        """Fine-mesh triangle mask of the coarse patch footprint."""
        pm = np.zeros(self.mesh2H.num_triangles, dtype=bool)
        pm[patch.elements] = True
        return pm[self.parent]


def partition_domain(domain, omega1_rects, H, h):
    """Build the two-region partition of the domain.

    omega1_rects is a sequence of (x0, y0, x1, y1) rectangles aligned to
    the coarse grid; an empty sequence yields the degenerate single-region
    partition used by the plain coarse-space baseline.
    """
    return DomainPartition(domain, omega1_rects, H, h)


def element_patch(part, T, L):
    """Vertex-adjacency patch of L rounds around coarse element T."""
    mesh = part.mesh2H
    nt = mesh.num_triangles
    T = int(T)
    if not (0 <= T < nt):
        raise MeshError("coarse element id out of range")
    if L < 0:
        raise MeshError("patch level must be >= 0")
    tmask = np.zeros(nt, dtype=bool)
    tmask[T] = True
    vt = part._vtH
    for _ in range(int(L)):
        if tmask.all():
            break
        vmask = np.zeros(mesh.num_vertices, dtype=bool)
        vmask[mesh.triangles[tmask].ravel()] = True
        tmask = (vt.T @ vmask.astype(np.int64)) > 0
    return Patch(seed=T, level=int(L),
                 elements=_frozen(np.flatnonzero(tmask)))


def combined_element(part, T):
    """Coarse interface element with its attached fine refined-region
    triangles (strict containment of the triangle's interface trace)."""
    edges = part.edges_of_coarse(T)
    if len(edges) == 0:
        raise MeshError(f"coarse element {T} has no interface segment")
    nt1 = part.mesh1.num_triangles
    total = np.bincount(part.gamma_t1, minlength=nt1)
    here = np.bincount(part.gamma_t1[edges], minlength=nt1)
    cand = np.unique(part.gamma_t1[edges])
    keep = cand[here[cand] == total[cand]]
    return CombinedElement(coarse_element=int(T),
                           fine_omega1_elements=_frozen(keep),
                           gamma_edges=edges)


def export_mesh(mesh, stream):
    """Write a mesh as plain text: vertex lines "v x y" then triangle
    lines "t i j k"."""
    for x, y in mesh.vertices:
        stream.write(f"v {x:.17g} {y:.17g}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"t {i} {j} {k}\n")


def export_partition(part, stream):
    """Write both fine meshes and the interface as plain text.

    Vertices and triangles of the refined region come first, then those of
    the complement with vertex ids offset by the refined-region count.
    Each interface edge yields two lines "g i j side" (side 1, then 2)
    with vertex ids in the combined numbering.
    """
    export_mesh(part.mesh1, stream)
    off = part.mesh1.num_vertices
    for x, y in part.mesh2.vertices:
        stream.write(f"v {x:.17g} {y:.17g}\n")
    for i, j, k in part.mesh2.triangles:
        stream.write(f"t {i + off} {j + off} {k + off}\n")
    for e in range(part.num_interface_edges):
        a, b = part.gamma_v1[e]
        stream.write(f"g {a} {b} 1\n")
        a, b = part.gamma_v2[e]
        stream.write(f"g {a + off} {b + off} 2\n")
