import io
import math

import numpy as np
import pytest

from felodm import (
    ChannelLayout,
    CoefficientError,
    Constant,
    GridField,
    RandomFieldParams,
    build_channel_field,
    build_uniform_tri_mesh,
    export_grid_field,
    generate_lognormal_field,
    import_grid_field,
    periodic_ratio_field,
    periodic_well_field,
    sample_per_element,
)
from felodm.mesh import UNIT_SQUARE


def test_constant_broadcasts():
    c = Constant(3.5)
    x = np.array([0.1, 0.7, 0.9])
    assert np.array_equal(c(x, x), np.full(3, 3.5))


def test_ratio_field_value_at_origin():
    # sin terms vanish at 0: (2/3.8) + (2/2) computed by hand
    a = periodic_ratio_field(0.2)
    assert a(0.0, 0.0) == pytest.approx(1.5263157894736843, abs=1e-15)


def test_ratio_field_is_periodic():
    eps = 0.2
    a = periodic_ratio_field(eps)
    x = np.array([0.03, 0.11, 0.37])
    y = np.array([0.05, 0.29, 0.41])
    assert np.allclose(a(x, y), a(x + eps, y), rtol=1e-12)
    assert np.allclose(a(x, y), a(x, y + eps), rtol=1e-12)


def test_ratio_field_contrast():
    a = periodic_ratio_field(0.2)
    g = np.linspace(0.0, 0.2, 401)
    xx, yy = np.meshgrid(g, g)
    v = a(xx, yy)
    assert v.min() > 0
    assert v.max() / v.min() > 20


def test_well_field_quarter_period_value():
    # both sines are 1 there: 1/(3.5*3.5)
    eps = 1.0 / 64.0
    a = periodic_well_field(eps)
    assert a(eps / 4, eps / 4) == pytest.approx(0.08163265306122448, abs=1e-15)


def test_well_field_is_periodic():
    eps = 1.0 / 16.0
    a = periodic_well_field(eps)
    x = np.array([0.009, 0.013])
    assert np.allclose(a(x, x), a(x + eps, x), rtol=1e-12)


def test_bad_epsilon_rejected():
    with pytest.raises(CoefficientError):
        periodic_ratio_field(0.0)
    with pytest.raises(CoefficientError):
        periodic_well_field(-1.0)


def test_grid_field_row_convention():
    # values[iy, ix]: second row is the upper half of the domain
    f = GridField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert f(0.25, 0.25) == 1.0
    assert f(0.75, 0.25) == 2.0
    assert f(0.25, 0.75) == 3.0
    assert f(0.75, 0.75) == 4.0


def test_grid_field_clips_at_domain_edge():
    f = GridField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert f(1.0, 1.0) == 4.0
    assert f(0.0, 1.0) == 3.0


def test_grid_field_validation():
    with pytest.raises(CoefficientError):
        GridField(np.ones((2, 3)))
    with pytest.raises(CoefficientError):
        GridField(np.array([[1.0, -1.0], [1.0, 1.0]]))
    with pytest.raises(CoefficientError):
        GridField(np.array([[1.0, np.nan], [1.0, 1.0]]))


def test_grid_field_values_frozen():
    f = GridField(np.ones((2, 2)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0


def test_sample_per_element_exact_for_aligned_grid():
    field = GridField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    mesh = build_uniform_tri_mesh(UNIT_SQUARE, 4)
    vals = sample_per_element(field, mesh)
    bc = mesh.vertices[mesh.triangles].mean(axis=1)
    expect = field(bc[:, 0], bc[:, 1])
    assert np.array_equal(vals, expect)


def test_sample_per_element_requires_multiple_resolution():
    field = GridField(np.ones((3, 3)))
    mesh = build_uniform_tri_mesh(UNIT_SQUARE, 4)
    with pytest.raises(CoefficientError):
        sample_per_element(field, mesh)


def test_sample_per_element_analytic_at_barycenters():
    a = periodic_ratio_field(0.25)
    mesh = build_uniform_tri_mesh(UNIT_SQUARE, 8)
    vals = sample_per_element(a, mesh)
    bc = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.allclose(vals, a(bc[:, 0], bc[:, 1]), rtol=1e-14)


def test_sample_per_element_rejects_nonpositive_callable():
    mesh = build_uniform_tri_mesh(UNIT_SQUARE, 4)
    with pytest.raises(CoefficientError):
        sample_per_element(lambda x, y: x - 10.0, mesh)


def test_lognormal_variance_is_prescribed():
    p = RandomFieldParams(n=64, variance=1.5, corr_x=0.05, corr_y=0.05,
                          seed=123)
    f = generate_lognormal_field(p)
    g = np.log(f.values)
    assert g.var() == pytest.approx(1.5, rel=1e-12)
    assert g.mean() == pytest.approx(0.0, abs=1e-12)


def test_lognormal_seed_reproducible():
    p = RandomFieldParams(n=32, variance=1.0, corr_x=0.1, corr_y=0.1, seed=9)
    a = generate_lognormal_field(p)
    b = generate_lognormal_field(p)
    assert np.array_equal(a.values, b.values)
    q = RandomFieldParams(n=32, variance=1.0, corr_x=0.1, corr_y=0.1, seed=10)
    c = generate_lognormal_field(q)
    assert not np.array_equal(a.values, c.values)


def test_lognormal_anisotropy_follows_correlation_lengths():
    p = RandomFieldParams(n=128, variance=1.0, corr_x=0.2, corr_y=0.02,
                          seed=4)
    g = np.log(generate_lognormal_field(p).values)
    # smoother along x: neighbor differences are smaller in that direction
    dx = np.diff(g, axis=1).std()
    dy = np.diff(g, axis=0).std()
    assert dx < dy


def test_lognormal_zero_variance_is_unit_field():
    p = RandomFieldParams(n=16, variance=0.0, corr_x=0.25, corr_y=0.25,
                          seed=1)
    f = generate_lognormal_field(p)
    assert np.array_equal(f.values, np.ones((16, 16)))


def test_random_field_params_validation():
    with pytest.raises(CoefficientError):
        RandomFieldParams(n=0, variance=1.0, corr_x=0.1, corr_y=0.1,
                          seed=1).validate()
    with pytest.raises(CoefficientError):
        RandomFieldParams(n=16, variance=-1.0, corr_x=0.1, corr_y=0.1,
                          seed=1).validate()
    with pytest.raises(CoefficientError):
        RandomFieldParams(n=16, variance=1.0, corr_x=0.0, corr_y=0.1,
                          seed=1).validate()
    # resolution too coarse for the correlation length
    with pytest.raises(CoefficientError):
        RandomFieldParams(n=16, variance=1.0, corr_x=0.01, corr_y=0.1,
                          seed=1).validate()


def test_grid_field_roundtrip_is_exact():
    p = RandomFieldParams(n=8, variance=2.0, corr_x=0.25, corr_y=0.25, seed=5)
    f = generate_lognormal_field(p)
    buf = io.StringIO()
    export_grid_field(f, buf)
    buf.seek(0)
    g = import_grid_field(buf)
    assert np.array_equal(f.values, g.values)


def test_import_grid_field_rejects_bad_body():
    buf = io.StringIO("2\n1.0 2.0\n")
    with pytest.raises(CoefficientError):
        import_grid_field(buf)
    buf = io.StringIO("2 2\n1 2\n3 4\n")
    with pytest.raises(CoefficientError):
        import_grid_field(buf)


def test_channel_layout_validation():
    with pytest.raises(CoefficientError):
        ChannelLayout(n=8, channels=((0, 9, 1, 2),)).validate()
    with pytest.raises(CoefficientError):
        ChannelLayout(n=8, inclusions=((7, 7, 2),)).validate()
    with pytest.raises(CoefficientError):
        ChannelLayout(n=8, background=0.0).validate()


def test_channel_wins_over_inclusion():
    lay = ChannelLayout(n=8, background=1.0, channel_value=100.0,
                        inclusion_value=50.0,
                        channels=((0, 8, 3, 4),),
                        inclusions=((2, 2, 3),))
    f = build_channel_field(lay)
    assert f.values[3, 3] == 100.0       # overlap cell: channel value
    assert f.values[2, 3] == 50.0        # inclusion only
    assert f.values[0, 0] == 1.0         # background
    # channel spans the full row
    assert np.all(f.values[3, :] == 100.0)
