"""Fine-scale correctors and the corrected combined basis.

The combined space (fine hats on the refined region, coarse hats on the
complement) cannot resolve the coefficient oscillations on the complement.
Each combined basis function psi is therefore corrected by a fine-scale
component q living in the remainder space W: fine complement functions
with zero quasi-interpolation weights, extended by zero to the refined
region.  The corrector collects element contributions

    a(q_T, w) = a_T(psi, w)   for all w in W,

one per complement coarse element T, where a_T integrates the volume term
over T and, for interface elements, the coupling terms over the element's
interface segment (the refined-region side enters only through traces and
fluxes there, since w vanishes on the refined region).  Each contribution
is localized to a patch of coarse elements around T; the patch solves are
constrained saddle problems sharing one factorization per distinct patch.

The corrected basis psi - q spans the space the coarse solves use; a
saturated patch level reproduces the uncorrected-global (ideal) variant.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .assembly import (DEFAULT_PENALTY, AssemblyError, DofLayout,
                       SaddleFactorization, SolverError,
                       assemble_interface_terms, assemble_operator,
                       mesh_dependent_norm)
from .coefficients import sample_per_element
from .mesh import MeshError, Patch, element_patch
from .transfer import (build_clement_weights, build_injection,
                       constraint_rows, patch_interior_dofs)

__all__ = [
    "MultiscaleSetup", "CorrectorProblem", "MultiscaleBasis",
    "corrector_rhs", "local_corrector_problem", "solve_local_corrector",
    "build_multiscale_basis", "choose_L", "saturation_level",
    "corrector_decay", "export_correctors",
]


class MultiscaleSetup:
    """State shared by every corrector solve for one coefficient field.

    Bundles the partition with the sampled coefficients, both dof layouts,
    the assembled fine operator, the quasi-interpolation weights, the
    nodal injection of the combined space into the fine one, and the
    table of fine complement children per complement coarse element.
    """

    def __init__(self, part, coeff, penalty=DEFAULT_PENALTY):
        self.part = part
        self.coeff = coeff
        self.penalty = float(penalty)
        self.a1 = sample_per_element(coeff, part.mesh1)
        self.a2 = sample_per_element(coeff, part.mesh2)
        self.layout_fine = DofLayout(part, "fine")
        self.layout_coarse = DofLayout(part, "coarse")
        self.operator = assemble_operator(part, self.a1, self.a2,
                                          self.layout_fine,
                                          penalty=self.penalty)
        self.weights = build_clement_weights(part, self.layout_fine)
        self.injection = build_injection(part, self.layout_fine,
                                         self.layout_coarse)
        self.children = self._children_table()

    def _children_table(self):
        part = self.part
        ntH = part.mesh2H.num_triangles
        nkids = part.ratio ** 2
        if ntH == 0:
            return np.zeros((0, nkids), dtype=np.int64)
        counts = np.bincount(part.parent, minlength=ntH)
        if not np.all(counts == nkids):
            raise MeshError("complement coarse elements are not uniformly "
                            "refined")
        order = np.argsort(part.parent, kind="stable")
        return order.reshape(ntH, nkids)


def corrector_rhs(setup, T, psi=None):
    """Element contribution functionals a_T(psi, .) of coarse element T.

    Returns a sparse matrix (fine test dofs x combined trial dofs) whose
    column for basis function psi holds the functional evaluated at every
    fine test dof; passing psi extracts that one column as a dense vector.
    Only fine complement rows are populated: test functions vanish on the
    refined region, so the volume term reduces to the fine children of T
    and the refined-region side of the interface enters only through its
    traces and fluxes on T's segment.
    """
    part = setup.part
    lf, lc = setup.layout_fine, setup.layout_coarse
    T = int(T)
    if not (0 <= T < part.mesh2H.num_triangles):
        raise MeshError("coarse element id out of range")

    mesh2, meshH = part.mesh2, part.mesh2H
    t = setup.children[T]
    local = np.einsum("tid,kd->tik", mesh2.grads[t], meshH.grads[T])
    local *= (np.asarray(setup.a2)[t] * mesh2.areas[t])[:, None, None]
    rows = np.broadcast_to(lf.dof2[mesh2.triangles[t]][:, :, None],
                           local.shape).ravel()
    cols = np.broadcast_to(lc.dof2[meshH.triangles[T]][None, None, :],
                           local.shape).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    g = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(lf.n, lc.n)).tocsc()

    edges = part.edges_of_coarse(T)
    if len(edges):
        g = g + assemble_interface_terms(
            part, setup.a1, setup.a2, layout_u=lc, layout_v=lf,
            edges=edges, penalty=setup.penalty, v_sides="fine2")
        g = g.tocsc()
    if psi is None:
        return g
    psi = int(psi)
    if not (0 <= psi < lc.n):
        raise AssemblyError("combined basis index out of range")
    return g[:, psi].toarray().ravel()


@dataclass
class CorrectorProblem:
    """One localized corrector solve, ready for factorization.

    The carrier lists the fine complement dofs interior to the patch (a
    saturated patch covers the seed's whole complement component, giving
    the element-global corrector); stiffness and constraints are the fine
    operator and the quasi-interpolation rows restricted to it, and rhs
    holds the element functional values on the carrier, one column per
    requested basis function.
    """

    patch: Patch
    carrier: np.ndarray
    stiffness: object
    constraints: object
    rhs: np.ndarray
    size: int = field(default=0)  # full fine-layout length


def _patch_blocks(setup, patch):
    carrier = patch_interior_dofs(setup.part, setup.layout_fine, patch)
    if len(carrier) == 0:
        return carrier, None, None
    ap = setup.operator[carrier][:, carrier]
    bp = constraint_rows(setup.part, setup.weights, carrier)
    return carrier, ap, bp


def _factorize(patch, ap, bp):
    try:
        return SaddleFactorization(ap, bp)
    except RuntimeError as exc:
        raise SolverError(
            f"corrector patch around coarse element {patch.seed} "
            f"(level {patch.level}): factorization failed: {exc}") from exc


def local_corrector_problem(setup, T, psi, level):
    """Assemble the level-L corrector problem of basis psi on element T."""
    patch = element_patch(setup.part, int(T), int(level))
    carrier, ap, bp = _patch_blocks(setup, patch)
    rhs = corrector_rhs(setup, T, psi)[carrier]
    return CorrectorProblem(patch=patch, carrier=carrier, stiffness=ap,
                            constraints=bp, rhs=rhs,
                            size=setup.layout_fine.n)


def solve_local_corrector(problem):
    """Solve one corrector problem; returns a full-length fine-layout
    vector, identically zero outside the patch carrier."""
    out = np.zeros(problem.size)
    if len(problem.carrier) == 0 or not np.any(problem.rhs):
        return out
    fact = _factorize(problem.patch, problem.stiffness, problem.constraints)
    out[problem.carrier] = fact.solve(problem.rhs)
    return out


@dataclass
class MultiscaleBasis:
    """Corrected combined basis, stored as two sparse maps into the fine
    space: the nodal injection and the per-basis corrector columns.

    footprints maps each corrected combined dof to the sorted coarse
    elements of the patches that contributed, the declared support bound
    of its corrector column.
    """

    level: int
    injection: object
    corrections: object
    footprints: dict

    @property
    def basis_matrix(self):
        """Fine-space coefficients of the corrected basis, one column per
        combined dof."""
        return (self.injection - self.corrections).tocsr()


def saturation_level(part):
    """Patch level guaranteed to exhaust any complement component."""
    return max(part.mesh2H.num_triangles, 1)


def build_multiscale_basis(setup, coeff=None, level=None,
                           penalty=DEFAULT_PENALTY):
    """Compute every corrector and assemble the corrected basis.

    Accepts either a prepared MultiscaleSetup or a (partition, coeff)
    pair.  Element contributions sharing the same patch element set reuse
    one factorization; iteration order is fixed, so the result is
    bit-stable.  Refined-region hats away from the interface never get a
    nonzero functional and keep zero correctors without any solve.
    """
    if not isinstance(setup, MultiscaleSetup):
        if coeff is None:
            raise AssemblyError("coefficient field required when passing "
                                "a partition")
        setup = MultiscaleSetup(setup, coeff, penalty=penalty)
    if level is None:
        raise AssemblyError("patch level required")
    level = int(level)
    if level < 0:
        raise MeshError("patch level must be >= 0")

    part = setup.part
    lf, lc = setup.layout_fine, setup.layout_coarse
    groups = {}
    order = []
    for T in range(part.mesh2H.num_triangles):
        p = element_patch(part, T, level)
        got = groups.get(p.key)
        if got is None:
            groups[p.key] = (p, [T])
            order.append(p.key)
        else:
            got[1].append(T)

    rows_acc, cols_acc, vals_acc = [], [], []
    footprints = {}
    for key in order:
        patch, seeds = groups[key]
        carrier, ap, bp = _patch_blocks(setup, patch)
        if len(carrier) == 0:
            continue
        fact = _factorize(patch, ap, bp)
        for T in seeds:
            g = corrector_rhs(setup, T).tocsr()[carrier].tocsc()
            psis = np.flatnonzero(np.diff(g.indptr))
            if len(psis) == 0:
                continue
            q = fact.solve(g[:, psis].toarray())
            nz = q != 0.0
            if nz.any():
                rows_acc.append(np.broadcast_to(carrier[:, None],
                                                q.shape)[nz])
                cols_acc.append(np.broadcast_to(psis[None, :], q.shape)[nz])
                vals_acc.append(q[nz])
            for p_ in psis:
                prev = footprints.get(int(p_))
                footprints[int(p_)] = (
                    np.array(patch.elements) if prev is None
                    else np.union1d(prev, patch.elements))
    if rows_acc:
        corr = sparse.coo_matrix(
            (np.concatenate(vals_acc),
             (np.concatenate(rows_acc), np.concatenate(cols_acc))),
            shape=(lf.n, lc.n)).tocsr()
    else:
        corr = sparse.csr_matrix((lf.n, lc.n))
    return MultiscaleBasis(level=level, injection=setup.injection,
                           corrections=corr, footprints=footprints)


def choose_L(H, h, L0):
    """Patch level rule used by the experiments:
    ceil(L0 * |log10 sqrt(H*h)|)."""
    H, h, L0 = float(H), float(h), float(L0)
    if not (0.0 < h < H < 1.0):
        raise ValueError("mesh sizes must satisfy 0 < h < H < 1")
    if L0 <= 0.0:
        raise ValueError("L0 must be positive")
    return int(math.ceil(L0 * abs(math.log10(math.sqrt(H * h)))))


def corrector_decay(setup, levels, elements=None):
    """Localization error of the element correctors against patch level.

    For each requested complement coarse element T and level L, computes
    the mesh-dependent norm of the difference between the element-global
    corrector (saturated patch on T's complement component) and its
    level-L localization, aggregated in quadrature over every basis
    function with a nonzero functional on T.

    Returns (elements, errors, saturated): errors has one row per element
    and one column per level; saturated flags levels whose patch already
    covers the whole component, where the difference is exactly zero.
    """
    part = setup.part
    lf = setup.layout_fine
    ntH = part.mesh2H.num_triangles
    if elements is None:
        elements = np.arange(ntH, dtype=np.int64)
    else:
        elements = np.asarray(elements, dtype=np.int64).reshape(-1)
        if len(elements) and (elements.min() < 0 or elements.max() >= ntH):
            raise MeshError("coarse element id out of range")
    levels = [int(L) for L in levels]
    sat = saturation_level(part)

    cache = {}

    def blocks(patch):
        got = cache.get(patch.key)
        if got is None:
            carrier, ap, bp = _patch_blocks(setup, patch)
            fact = _factorize(patch, ap, bp) if len(carrier) else None
            got = (carrier, fact)
            cache[patch.key] = got
        return got

    errors = np.zeros((len(elements), len(levels)))
    saturated = np.zeros((len(elements), len(levels)), dtype=bool)
    for row, T in enumerate(elements):
        g = corrector_rhs(setup, int(T)).tocsr()
        sat_patch = element_patch(part, int(T), sat)
        carrier_sat, fact_sat = blocks(sat_patch)
        if fact_sat is None:
            continue
        gs = g[carrier_sat].tocsc()
        psis = np.flatnonzero(np.diff(gs.indptr))
        if len(psis) == 0:
            continue
        ref = np.zeros((lf.n, len(psis)))
        ref[carrier_sat] = fact_sat.solve(gs[:, psis].toarray())
        for jL, L in enumerate(levels):
            patch = element_patch(part, int(T), L)
            if patch.key == sat_patch.key:
                saturated[row, jL] = True
                continue
            carrier, fact = blocks(patch)
            diff = ref.copy()
            if fact is not None:
                loc = fact.solve(g[carrier].tocsc()[:, psis].toarray())
                diff[carrier] -= loc
            total = 0.0
            for j in range(diff.shape[1]):
                total += mesh_dependent_norm(part, setup.a1, setup.a2, lf,
                                             diff[:, j],
                                             penalty=setup.penalty) ** 2
            errors[row, jL] = math.sqrt(total)
    return np.asarray(elements, dtype=np.int64), errors, saturated


def export_correctors(basis, stream):
    """Write corrector columns as "c basis fine_dof value" lines, one per
    stored nonzero, ordered by basis function then fine dof."""
    c = basis.corrections.tocsc()
    for j in range(c.shape[1]):
        col = c[:, j].tocoo()
        order = np.argsort(col.row)
        for i, v in zip(col.row[order], col.data[order]):
            stream.write(f"c {j} {i} {v:.17g}\n")
