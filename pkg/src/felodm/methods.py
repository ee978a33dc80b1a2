"""End-to-end solvers and well post-processing.

Four solve paths share one assembly pipeline:

* reference: the fine two-sided solve, the discrete truth every other
  method is measured against;
* ideal: the combined coarse solve with element-global correctors
  (saturated patches), size-guarded;
* fe-lodm: the combined coarse solve with level-L localized correctors;
* lodm: the pure coarse baseline, the same machinery run on a degenerate
  partition whose refined region is empty.

Coarse solves assemble S = Phi^T A Phi with Phi the corrected-basis
matrix, so discrete symmetry and Galerkin orthogonality against the
corrected space hold by construction.  Point loads reduce to evaluating
the corrected basis at the source points; since correctors vanish on the
refined region and sources must sit strictly inside it, this is exact.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (DEFAULT_PENALTY, AssemblyError, SolverError,
                       assemble_load, assemble_load_dirac, solve_spd)
from .coefficients import sample_per_element
from .correctors import (MultiscaleSetup, build_multiscale_basis,
                         saturation_level)
from .mesh import MeshError, partition_domain

__all__ = [
    "SolveResult", "Well", "WellSpec", "VolumeLoad", "PointLoad",
    "IDEAL_DOF_LIMIT", "solve_reference", "solve_fe_lodm", "solve_ideal",
    "solve_lodm_baseline", "transfer_fine_values", "point_value",
    "compute_wbp", "export_solution", "wbp_report",
]

# global correctors factorize the whole complement carrier at once; above
# this many fine unknowns demand the localized method instead
IDEAL_DOF_LIMIT = 300_000


class VolumeLoad:
    """Volume density right-hand side f(x, y), vectorized over arrays."""

    def __init__(self, f):
        self.f = f

    def assemble(self, part, layout):
        return assemble_load(part, layout, self.f)


class PointLoad:
    """Sum of point sources w_k * delta(x - P_k); every source must sit
    strictly inside the refined region."""

    def __init__(self, points, weights):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.weights = np.asarray(weights, dtype=np.float64).ravel()
        if len(self.points) != len(self.weights):
            raise AssemblyError("one weight per source point required")

    def assemble(self, part, layout):
        return assemble_load_dirac(part, layout, self.points, self.weights)


def _as_load(load):
    if isinstance(load, (VolumeLoad, PointLoad)):
        return load
    if callable(load):
        return VolumeLoad(load)
    raise AssemblyError("load must be a VolumeLoad, a PointLoad or a "
                        "callable density")


@dataclass
class SolveResult:
    """One completed solve: the method tag, the solution as a fine-layout
    dof vector, the solved system size, timing and the verified relative
    residual.  Coarse solves also keep their coarse coefficients and the
    corrected basis used to expand them."""

    method: str
    part: object
    layout: object
    u: np.ndarray
    system_size: int
    wall_time: float
    residual: float
    coarse: np.ndarray = field(default=None)
    basis: object = field(default=None)


def _relative_residual(m, x, b):
    """Normwise backward error, matching the solver verification scale."""
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return 0.0
    scale = bn + float(np.max(np.abs(m).sum(axis=0))) * float(np.linalg.norm(x))
    return float(np.linalg.norm(m @ x - b)) / scale


def _setup_for(part, coeff, penalty):
    if isinstance(part, MultiscaleSetup):
        return part
    if coeff is None:
        raise AssemblyError("coefficient field required")
    return MultiscaleSetup(part, coeff, penalty=penalty)


def solve_reference(part, coeff=None, penalty=DEFAULT_PENALTY, load=None):
    """Fine two-sided solve.

    part may be a DomainPartition (with coeff the coefficient field) or a
    prepared MultiscaleSetup, in which case coeff and penalty come from
    it.
    """
    setup = _setup_for(part, coeff, penalty)
    if load is None:
        raise AssemblyError("load required")
    t0 = time.perf_counter()
    b = _as_load(load).assemble(setup.part, setup.layout_fine)
    u = solve_spd(setup.operator, b)
    return SolveResult(method="reference", part=setup.part,
                       layout=setup.layout_fine, u=u,
                       system_size=setup.layout_fine.n,
                       wall_time=time.perf_counter() - t0,
                       residual=_relative_residual(setup.operator, u, b))


def _solve_with_basis(setup, basis, load, method, t0):
    phi = basis.basis_matrix
    b = _as_load(load).assemble(setup.part, setup.layout_fine)
    s = (phi.T @ (setup.operator @ phi)).tocsr()
    bc = phi.T @ b
    c = solve_spd(s, bc)
    return SolveResult(method=method, part=setup.part,
                       layout=setup.layout_fine, u=phi @ c,
                       system_size=setup.layout_coarse.n,
                       wall_time=time.perf_counter() - t0,
                       residual=_relative_residual(s, c, bc),
                       coarse=c, basis=basis)


def solve_fe_lodm(part, coeff=None, penalty=DEFAULT_PENALTY, load=None,
                  level=None, basis=None):
    """Combined coarse solve with level-L localized correctors.

    Pass a prebuilt MultiscaleBasis to reuse correctors across loads;
    otherwise the basis is built here at the requested level.
    """
    setup = _setup_for(part, coeff, penalty)
    if load is None:
        raise AssemblyError("load required")
    t0 = time.perf_counter()
    if basis is None:
        if level is None:
            raise AssemblyError("patch level required without a prebuilt "
                                "basis")
        basis = build_multiscale_basis(setup, level=int(level))
    return _solve_with_basis(setup, basis, load, "fe-lodm", t0)


def solve_ideal(part, coeff=None, penalty=DEFAULT_PENALTY, load=None):
    """Combined coarse solve with element-global correctors (saturated
    patches); guarded by a fine-size limit since the carrier of every
    corrector spans its whole complement component."""
    setup = _setup_for(part, coeff, penalty)
    if load is None:
        raise AssemblyError("load required")
    if setup.layout_fine.n > IDEAL_DOF_LIMIT:
        raise SolverError(
            f"ideal solve with {setup.layout_fine.n} fine unknowns exceeds "
            f"the {IDEAL_DOF_LIMIT} limit; use the localized method")
    t0 = time.perf_counter()
    basis = build_multiscale_basis(setup,
                                   level=saturation_level(setup.part))
    return _solve_with_basis(setup, basis, load, "ideal", t0)


def solve_lodm_baseline(domain, H, h, coeff=None, load=None, level=None,
                        penalty=DEFAULT_PENALTY):
    """Pure coarse baseline: the same machinery on the degenerate
    partition with an empty refined region (no interface), used as the
    comparison row next to the combined method."""
    part = partition_domain(domain, [], H, h)
    setup = MultiscaleSetup(part, coeff, penalty=penalty)
    if load is None:
        raise AssemblyError("load required")
    if level is None:
        raise AssemblyError("patch level required")
    t0 = time.perf_counter()
    basis = build_multiscale_basis(setup, level=int(level))
    result = _solve_with_basis(setup, basis, load, "lodm", t0)
    return result


def transfer_fine_values(result, part_to, layout_to):
    """Re-express a fine solution on another partition of the same domain
    at the same fine resolution.

    Values move by lattice position.  Where the source duplicates
    interface vertices their sides are averaged, so a continuous source
    transfers exactly; where the target duplicates, both sides receive
    the same value.
    """
    src_part, src_layout = result.part, result.layout
    if src_part.fine_n != part_to.fine_n:
        raise AssemblyError("partitions have different fine resolutions")
    nvk = src_part.fine_n + 1
    v1, v2 = src_layout.expand(result.u)
    acc = np.zeros(nvk * nvk)
    cnt = np.zeros(nvk * nvk)
    for mesh, vals in ((src_part.mesh1, v1), (src_part.mesh2, v2)):
        if mesh.num_vertices == 0:
            continue
        keys = mesh.grid[:, 1] * nvk + mesh.grid[:, 0]
        np.add.at(acc, keys, vals)
        np.add.at(cnt, keys, 1.0)
    vals_global = acc / np.maximum(cnt, 1.0)

    def pick(mesh):
        if mesh.num_vertices == 0:
            return np.zeros(0)
        keys = mesh.grid[:, 1] * nvk + mesh.grid[:, 0]
        if np.any(cnt[keys] == 0):
            raise AssemblyError("target vertex not covered by the source "
                                "partition")
        return vals_global[keys]

    return layout_to.restrict(pick(part_to.mesh1), pick(part_to.mesh2))


# -- point evaluation and wells -------------------------------------------------


def _candidate_cells(n, x, y):
    """Fine lattice cells whose closure contains the point (1, 2 or 4
    cells depending on edge/vertex snapping)."""
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise MeshError(f"point ({x}, {y}) is not interior to the unit "
                        "square")
    sx, sy = x * n, y * n
    on_x = abs(sx - round(sx)) < 1e-12
    on_y = abs(sy - round(sy)) < 1e-12
    i0 = int(round(sx)) if on_x else int(math.floor(sx))
    j0 = int(round(sy)) if on_y else int(math.floor(sy))
    cells = []
    for di in ((-1, 0) if on_x else (0,)):
        for dj in ((-1, 0) if on_y else (0,)):
            ci, cj = i0 + di, j0 + dj
            if 0 <= ci < n and 0 <= cj < n:
                cells.append((ci, cj))
    return cells, sx, sy


def _containing_tris(mesh, cells, sx, sy, require_all):
    """(triangle id, barycentric weights) pairs of the mesh triangles in
    the candidate cells whose closure contains the point."""
    found = []
    for ci, cj in cells:
        if not mesh.has_cell([(ci, cj)])[0]:
            if require_all:
                raise MeshError(f"cell ({ci}, {cj}) at the point is outside "
                                "the region")
            continue
        fa, fb = sx - ci, sy - cj
        if fa >= fb - 1e-12:
            t = int(mesh.tri_index([(ci, cj)], [True])[0])
            found.append((t, np.array([1.0 - fa, fa - fb, fb])))
        if fb >= fa - 1e-12:
            t = int(mesh.tri_index([(ci, cj)], [False])[0])
            found.append((t, np.array([1.0 - fb, fa, fb - fa])))
    return found


def point_value(part, layout, u, x, y):
    """P1 evaluation of a fine-layout function at an interior point; on
    the interface the refined-region side wins."""
    v1, v2 = layout.expand(u)
    cells, sx, sy = _candidate_cells(part.fine_n, x, y)
    for mesh, vals in ((part.mesh1, v1), (part.mesh2, v2)):
        if mesh.num_triangles == 0:
            continue
        found = _containing_tris(mesh, cells, sx, sy, require_all=False)
        if found:
            t, lam = found[0]
            return float(np.dot(vals[mesh.triangles[t]], lam))
    raise MeshError(f"point ({x}, {y}) is not inside the meshed domain")


@dataclass(frozen=True)
class Well:
    x: float
    y: float
    rate: float
    radius: float


class WellSpec:
    """Point-well collection: position, signed flow rate and bore radius
    per well.  Wells must sit strictly inside a single region (the refined
    one, for combined partitions), with a radius well below the fine
    spacing."""

    def __init__(self, wells):
        out = []
        for w in wells:
            if not isinstance(w, Well):
                x, y, rate, radius = w
                w = Well(float(x), float(y), float(rate), float(radius))
            if w.radius <= 0.0:
                raise AssemblyError("well radius must be positive")
            out.append(w)
        self.wells = tuple(out)

    def __len__(self):
        return len(self.wells)

    def points(self):
        return np.array([[w.x, w.y] for w in self.wells])

    def rates(self):
        return np.array([w.rate for w in self.wells])

    def load(self):
        """The matching right-hand side: one point source per well."""
        return PointLoad(self.points(), self.rates())


def compute_wbp(result, part, coeff, wells):
    """Well-bore pressure of each well against a solved pressure field.

    WBP = u(P) + rate / (2 pi Abar) * ln(r_w / r0) with r0 = 0.2 h the
    equivalent radius of the fine grid and Abar the geometric mean of the
    coefficient over the fine refined-region elements touching the well.
    u(P) is evaluated by P1 interpolation of the solve result (which may
    live on a different partition at the same fine resolution, as the
    baseline does).
    """
    if not isinstance(wells, WellSpec):
        wells = WellSpec(wells)
    if part.fine_n != result.part.fine_n:
        raise AssemblyError("result and partition fine resolutions differ")
    a1 = np.asarray(sample_per_element(coeff, part.mesh1))
    r0 = 0.2 * part.h
    out = np.zeros(len(wells))
    for j, w in enumerate(wells.wells):
        if w.radius >= r0:
            raise AssemblyError(
                f"well radius {w.radius} is not below the equivalent grid "
                f"radius {r0}")
        cells, sx, sy = _candidate_cells(part.fine_n, w.x, w.y)
        touching = _containing_tris(part.mesh1, cells, sx, sy,
                                    require_all=True)
        if not touching:
            raise MeshError(f"well at ({w.x}, {w.y}) touches no "
                            "refined-region element")
        tris = np.array(sorted({t for t, _ in touching}), dtype=np.int64)
        abar = math.exp(float(np.mean(np.log(a1[tris]))))
        u_p = point_value(result.part, result.layout, result.u, w.x, w.y)
        out[j] = u_p
        if w.rate != 0.0:
            out[j] += w.rate / (2.0 * math.pi * abar) * math.log(
                w.radius / r0)
    return out


def export_solution(u, stream):
    """Nodal solution values as "i value" lines, one per fine dof."""
    for i, v in enumerate(np.asarray(u, dtype=np.float64).ravel()):
        stream.write(f"{i} {v:.17g}\n")


def wbp_report(values, stream):
    """Well-bore pressure report: one "well j: wbp value" line per well,
    in well order, numbered from 1."""
    for j, v in enumerate(np.asarray(values, dtype=np.float64).ravel(), 1):
        stream.write(f"well {j}: wbp {v:.17g}\n")
