import io

import numpy as np
import pytest
from scipy import sparse

from felodm import (
    AssemblyError,
    Constant,
    DofLayout,
    SaddleFactorization,
    SolverError,
    assemble_load,
    assemble_load_dirac,
    assemble_operator,
    assemble_volume_stiffness,
    broken_energy_norm,
    error_report,
    export_matrix,
    jump_seminorm,
    l2_norm,
    mesh_dependent_norm,
    partition_domain,
    periodic_ratio_field,
    sample_per_element,
    solve_spd,
)
from felodm.mesh import UNIT_SQUARE

PEN = 10.0


def make_part():
    return partition_domain(UNIT_SQUARE, [(0.25, 0.25, 0.75, 0.75)],
                            H=2**-2, h=2**-4)


def unit_samples(part):
    one = Constant(1.0)
    return (sample_per_element(one, part.mesh1),
            sample_per_element(one, part.mesh2))


def hat(part, layout, grid_pt, block=1):
    u = np.zeros(layout.n)
    if block == 1:
        vid = part.mesh1.vertex_index([grid_pt])[0]
        u[layout.dof1[vid]] = 1.0
    else:
        vid = part.mesh2.vertex_index([grid_pt])[0]
        u[layout.dof2[vid]] = 1.0
    return u


def test_layout_expand_restrict_roundtrip():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    u = np.sin(np.arange(layout.n, dtype=np.float64))
    v1, v2 = layout.expand(u)
    assert np.array_equal(layout.restrict(v1, v2), u)


def test_operator_is_exactly_symmetric():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a = periodic_ratio_field(0.25)
    a1 = sample_per_element(a, part.mesh1)
    a2 = sample_per_element(a, part.mesh2)
    op = assemble_operator(part, a1, a2, layout, penalty=PEN)
    assert (op - op.T).nnz == 0


def test_operator_is_positive_definite():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a1, a2 = unit_samples(part)
    op = assemble_operator(part, a1, a2, layout, penalty=PEN)
    np.linalg.cholesky(op.toarray())  # raises if not SPD


def test_interior_hat_energy_is_two():
    # five-point stencil on the right-triangle lattice: diagonal entry 4
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a1, a2 = unit_samples(part)
    u = hat(part, layout, (8, 8))
    e = broken_energy_norm(part, a1, a2, layout, u)
    assert e * e == pytest.approx(4.0, rel=1e-14)


def test_interface_hat_jump_and_norm():
    # hat on the refined side of a straight interface stretch: the two
    # touching edges integrate the P1 jump to 2h/3, the half stencil
    # carries energy 2
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a1, a2 = unit_samples(part)
    u = hat(part, layout, (8, 4))
    j = jump_seminorm(part, layout, u, scale="h", penalty=PEN)
    assert j * j == pytest.approx(2.0 * PEN / 3.0, rel=1e-13)
    e = broken_energy_norm(part, a1, a2, layout, u)
    assert e * e == pytest.approx(2.0, rel=1e-13)
    m = mesh_dependent_norm(part, a1, a2, layout, u, scale="h", penalty=PEN)
    assert m * m == pytest.approx(2.0 + 2.0 * PEN / 3.0, rel=1e-13)


def test_interior_hat_l2_norm():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    u = hat(part, layout, (8, 8))
    h = part.h
    assert l2_norm(part, layout, u) == pytest.approx(h / np.sqrt(2.0),
                                                     rel=1e-14)


def test_jump_free_function_sees_only_energy():
    # for a function continuous across the interface, flux and penalty
    # terms cancel and the bilinear form reduces to the broken energy
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a = periodic_ratio_field(0.25)
    a1 = sample_per_element(a, part.mesh1)
    a2 = sample_per_element(a, part.mesh2)
    op = assemble_operator(part, a1, a2, layout, penalty=PEN)

    def g(pts):
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])

    u = layout.restrict(g(part.mesh1.vertices), g(part.mesh2.vertices))
    quad = float(u @ (op @ u))
    e = broken_energy_norm(part, a1, a2, layout, u)
    assert quad == pytest.approx(e * e, rel=1e-13)
    assert jump_seminorm(part, layout, u) == pytest.approx(0.0, abs=1e-13)


def test_volume_stiffness_matches_energy_norm():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a = periodic_ratio_field(0.25)
    a1 = sample_per_element(a, part.mesh1)
    a2 = sample_per_element(a, part.mesh2)
    k = assemble_volume_stiffness(part, a1, a2, layout)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(layout.n)
    e = broken_energy_norm(part, a1, a2, layout, u)
    assert float(u @ (k @ u)) == pytest.approx(e * e, rel=1e-12)


def test_load_constant_density_interior_entry():
    # f = 1: an interior hat integrates to h^2 (six triangles of area
    # h^2/2, one third each)
    part = make_part()
    layout = DofLayout(part, kind="fine")
    b = assemble_load(part, layout, lambda x, y: np.ones_like(x))
    vid = part.mesh1.vertex_index([(8, 8)])[0]
    assert b[layout.dof1[vid]] == pytest.approx(part.h ** 2, rel=1e-14)


def test_load_midedge_rule_exact_for_linear_density():
    part = make_part()
    layout = DofLayout(part, kind="fine")

    def f(x, y):
        return 1.0 + 2.0 * x - 0.5 * y

    b = assemble_load(part, layout, f, rule="midedge")
    # oracle: exact P1 x P1 mass integration, sum_T area/12 (f_i + sum f_k)
    oracle = np.zeros(layout.n)
    for mesh, dofmap in ((part.mesh1, layout.dof1),
                         (part.mesh2, layout.dof2)):
        p = mesh.vertices[mesh.triangles]
        fv = f(p[:, :, 0], p[:, :, 1])
        w = mesh.areas[:, None] / 12.0 * (fv + fv.sum(axis=1)[:, None])
        dofs = dofmap[mesh.triangles].ravel()
        keep = dofs >= 0
        np.add.at(oracle, dofs[keep], w.ravel()[keep])
    assert np.allclose(b, oracle, rtol=1e-13, atol=1e-16)


def test_load_rejects_unknown_rule():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    with pytest.raises(AssemblyError):
        assemble_load(part, layout, lambda x, y: np.ones_like(x),
                      rule="gauss7")


def test_dirac_inside_refined_region():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    b = assemble_load_dirac(part, layout, [(0.40, 0.35)], [2.5])
    nz = np.nonzero(b)[0]
    assert 1 <= len(nz) <= 3
    assert np.all(nz < layout.n1)
    assert b.sum() == pytest.approx(2.5, rel=1e-14)


def test_dirac_inside_coarse_region():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    b = assemble_load_dirac(part, layout, [(0.1, 0.1)], [1.0])
    nz = np.nonzero(b)[0]
    assert np.all(nz >= layout.n1)
    assert b.sum() == pytest.approx(1.0, rel=1e-14)


def test_dirac_at_fine_vertex_is_single_entry():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    b = assemble_load_dirac(part, layout, [(0.5, 0.5)], [3.0])
    vid = part.mesh1.vertex_index([(8, 8)])[0]
    expect = np.zeros(layout.n)
    expect[layout.dof1[vid]] = 3.0
    assert np.array_equal(b, expect)


def test_dirac_on_interface_rejected():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    with pytest.raises(AssemblyError):
        assemble_load_dirac(part, layout, [(0.5, 0.25)], [1.0])
    with pytest.raises(AssemblyError):
        # interior of an interface edge straddles the two meshes too
        assemble_load_dirac(part, layout, [(0.53125, 0.25)], [1.0])


def test_dirac_outside_domain_rejected():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    for pt in ((1.2, 0.5), (0.5, 1.0), (0.0, 0.5)):
        with pytest.raises(AssemblyError):
            assemble_load_dirac(part, layout, [pt], [1.0])


def test_error_report_scales():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a1, a2 = unit_samples(part)
    rng = np.random.default_rng(11)
    u = rng.standard_normal(layout.n)
    rep = error_report(part, a1, a2, layout, u, u)
    for region in ("omega", "omega1", "omega2"):
        for norm in ("energy", "l2", "linf"):
            assert rep[region][norm] == 0.0
    rep = error_report(part, a1, a2, layout, u, np.zeros_like(u))
    assert rep["omega"]["energy"] == pytest.approx(1.0)
    assert rep["omega"]["l2"] == pytest.approx(1.0)


def test_solve_spd_zero_rhs_shortcut():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a1, a2 = unit_samples(part)
    op = assemble_operator(part, a1, a2, layout, penalty=PEN)
    x = solve_spd(op, np.zeros(layout.n))
    assert np.array_equal(x, np.zeros(layout.n))


def test_solve_spd_matches_dense():
    part = make_part()
    layout = DofLayout(part, kind="fine")
    a = periodic_ratio_field(0.25)
    a1 = sample_per_element(a, part.mesh1)
    a2 = sample_per_element(a, part.mesh2)
    op = assemble_operator(part, a1, a2, layout, penalty=PEN)
    rng = np.random.default_rng(7)
    b = rng.standard_normal(layout.n)
    x = solve_spd(op, b)
    xd = np.linalg.solve(op.toarray(), b)
    assert np.allclose(x, xd, rtol=1e-9, atol=1e-12)


def test_solve_spd_size_mismatch():
    m = sparse.identity(4, format="csr")
    with pytest.raises(AssemblyError):
        solve_spd(m, np.ones(5))


def test_saddle_matches_dense_kkt():
    rng = np.random.default_rng(5)
    n, nc = 40, 6
    q = rng.standard_normal((n, n))
    a = sparse.csr_matrix(q @ q.T + n * np.eye(n))
    b_rows = sparse.csr_matrix(rng.standard_normal((nc, n)))
    fac = SaddleFactorization(a, b_rows)
    rhs = rng.standard_normal((n, 3))
    x = fac.solve(rhs)
    kkt = np.block([[a.toarray(), b_rows.toarray().T],
                    [b_rows.toarray(), np.zeros((nc, nc))]])
    full = np.vstack([rhs, np.zeros((nc, 3))])
    xd = np.linalg.solve(kkt, full)[:n]
    assert np.allclose(x, xd, rtol=1e-9, atol=1e-12)
    # constraints hold to solver tolerance
    assert np.abs(b_rows @ x).max() < 1e-10 * np.abs(x).max() * n


def test_saddle_zero_columns_stay_zero():
    rng = np.random.default_rng(6)
    n = 20
    a = sparse.csr_matrix(np.diag(rng.uniform(1.0, 2.0, n)))
    b_rows = sparse.csr_matrix(np.eye(2, n))
    fac = SaddleFactorization(a, b_rows)
    rhs = np.zeros((n, 2))
    rhs[:, 1] = rng.standard_normal(n)
    x = fac.solve(rhs)
    assert np.array_equal(x[:, 0], np.zeros(n))
    assert np.any(x[:, 1] != 0.0)


def test_saddle_vector_rhs_roundtrip():
    rng = np.random.default_rng(8)
    n = 15
    a = sparse.csr_matrix(np.diag(rng.uniform(1.0, 2.0, n)))
    b_rows = sparse.csr_matrix(np.eye(1, n))
    fac = SaddleFactorization(a, b_rows)
    r = rng.standard_normal(n)
    x1 = fac.solve(r)
    x2 = fac.solve(r.reshape(n, 1))
    assert x1.ndim == 1
    assert np.array_equal(x1, x2[:, 0])


def test_saddle_width_mismatch_rejected():
    a = sparse.identity(4, format="csr")
    b_rows = sparse.csr_matrix(np.eye(2, 5))
    with pytest.raises(AssemblyError):
        SaddleFactorization(a, b_rows)


def test_export_matrix_lower_triangle():
    rng = np.random.default_rng(9)
    d = rng.standard_normal((5, 5))
    m = sparse.csr_matrix(d + d.T)
    buf = io.StringIO()
    export_matrix(m, buf)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == sparse.tril(m).nnz
    rebuilt = np.zeros((5, 5))
    for ln in lines:
        i, j, v = ln.split()
        i, j, v = int(i), int(j), float(v)
        assert i >= j
        rebuilt[i, j] = v
        rebuilt[j, i] = v
    assert np.allclose(rebuilt, m.toarray(), rtol=1e-15)
