"""Scalar diffusion coefficients: analytic oscillatory fields, piecewise
constant grid fields, lognormal random fields, and channel layouts."""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CoefficientError", "Constant", "AnalyticPeriodic", "GridField",
    "periodic_ratio_field", "periodic_well_field",
    "RandomFieldParams", "generate_lognormal_field",
    "ChannelLayout", "build_channel_field",
    "sample_per_element", "export_grid_field", "import_grid_field",
]


class CoefficientError(ValueError):
    """Invalid coefficient definition or sampling request."""


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        return np.full(x.shape, self.value)


@dataclass(frozen=True)
class AnalyticPeriodic:
    """Coefficient given by a callable of (x, y); epsilon is stored for
    reporting only."""

    func: object
    epsilon: float = 0.0

    def __call__(self, x, y):
        return np.asarray(self.func(np.asarray(x, dtype=np.float64),
                                    np.asarray(y, dtype=np.float64)),
                          dtype=np.float64)


def periodic_ratio_field(epsilon):
    """Oscillatory two-ratio coefficient with contrast about 40.

    A(x, y) = (2 + 1.8 sin(2 pi x / eps)) / (2 + 1.8 cos(2 pi y / eps))
            + (2 + 1.8 sin(2 pi y / eps)) / (2 + 1.8 sin(2 pi x / eps))
    """
    if epsilon <= 0:
        raise CoefficientError("epsilon must be positive")
    w = 2.0 * math.pi / epsilon

    def f(x, y):
        sx = np.sin(w * x)
        return ((2.0 + 1.8 * sx) / (2.0 + 1.8 * np.cos(w * y))
                + (2.0 + 1.8 * np.sin(w * y)) / (2.0 + 1.8 * sx))

    return AnalyticPeriodic(func=f, epsilon=float(epsilon))


def periodic_well_field(epsilon):
    """Separable reciprocal coefficient used in the pumping tests.

    A(x, y) = 1 / ((2 + 1.5 sin(2 pi x / eps)) (2 + 1.5 sin(2 pi y / eps)))
    """
    if epsilon <= 0:
        raise CoefficientError("epsilon must be positive")
    w = 2.0 * math.pi / epsilon

    def f(x, y):
        return 1.0 / ((2.0 + 1.5 * np.sin(w * x)) * (2.0 + 1.5 * np.sin(w * y)))

    return AnalyticPeriodic(func=f, epsilon=float(epsilon))


@dataclass(frozen=True)
class GridField:
    """Piecewise constant coefficient on an n x n grid of square cells.

    values[iy, ix] is the value on cell (ix, iy); the layout matches
    image-style row ordering so values[j] is the row of cells at height
    index j.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise CoefficientError("grid field must be square and nonempty")
        if not np.all(np.isfinite(v)) or v.min() <= 0:
            raise CoefficientError("grid field values must be finite and positive")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = self.n
        ix = np.clip((x * n).astype(np.int64), 0, n - 1)
        iy = np.clip((y * n).astype(np.int64), 0, n - 1)
        return self.values[iy, ix]


def sample_per_element(coeff, mesh):
    """One coefficient value per triangle.

    Analytic coefficients are sampled at barycenters.  Grid fields must be
    aligned with the mesh (the mesh resolution a multiple of the field
    resolution) so each triangle lies in exactly one field cell; the cell
    value is used, making the sampling exact rather than a quadrature.
    """
    if isinstance(coeff, GridField):
        ratio = mesh.n // coeff.n
        if ratio < 1 or mesh.n != ratio * coeff.n:
            raise CoefficientError(
                f"mesh resolution {mesh.n} is not a multiple of the "
                f"field resolution {coeff.n}")
        cells = mesh.tri_cell // ratio
        return coeff.values[cells[:, 1], cells[:, 0]].copy()
    p = mesh.vertices[mesh.triangles]
    bc = p.mean(axis=1)
    vals = np.asarray(coeff(bc[:, 0], bc[:, 1]), dtype=np.float64)
    if vals.shape != (mesh.num_triangles,):
        raise CoefficientError("coefficient callable returned a bad shape")
    if len(vals) and (not np.all(np.isfinite(vals)) or vals.min() <= 0):
        raise CoefficientError("coefficient must be finite and positive")
    return vals


@dataclass(frozen=True)
class RandomFieldParams:
    """Lognormal field: exp of a smoothed white noise with prescribed
    variance.  Correlation lengths are in domain units; smoothing is an
    elliptical moving average with periodic wrap."""

    n: int
    variance: float
    corr_x: float
    corr_y: float
    seed: int

    def validate(self):
        if self.n < 1:
            raise CoefficientError("field resolution must be >= 1")
        if self.variance < 0:
            raise CoefficientError("variance must be >= 0")
        if self.corr_x <= 0 or self.corr_y <= 0:
            raise CoefficientError("correlation lengths must be positive")
        if self.n * min(self.corr_x, self.corr_y) < 1:
            raise CoefficientError(
                "field resolution cannot resolve the correlation length")


def generate_lognormal_field(params):
    """Draw the lognormal coefficient field as a GridField.

    Gaussian white noise (Box-Muller from a PCG64 stream, so the draw is
    reproducible across platforms) is averaged over elliptical stencils of
    semi-axes corr_x, corr_y with periodic wrap, then rescaled to the
    requested pointwise variance and exponentiated.
    """
    from scipy import ndimage

    params.validate()
    n = params.n
    if params.variance == 0.0:
        return GridField(np.ones((n, n)))
    gen = np.random.Generator(np.random.PCG64(params.seed))
    u1 = gen.random((n, n))
    u2 = gen.random((n, n))
    raw = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)

    ri = int(math.floor(params.corr_x * n))
    rj = int(math.floor(params.corr_y * n))
    di = np.arange(-ri, ri + 1)
    dj = np.arange(-rj, rj + 1)
    ell = ((di[None, :] / (params.corr_x * n)) ** 2
           + (dj[:, None] / (params.corr_y * n)) ** 2) <= 1.0
    kernel = ell.astype(np.float64)
    kernel /= kernel.sum()
    sm = ndimage.convolve(raw, kernel, mode="wrap")

    var = sm.var()
    if var == 0.0:
        raise CoefficientError("smoothed noise degenerated to a constant")
    g = (sm - sm.mean()) * math.sqrt(params.variance / var)
    return GridField(np.exp(g))


@dataclass(frozen=True)
class ChannelLayout:
    """High-contrast layout: thin horizontal channels over scattered square
    inclusions on a unit background.  Geometry is given in cell units of
    the n x n field grid; channels win where they overlap inclusions."""

    n: int
    background: float = 1.0
    channel_value: float = 1.0e5
    inclusion_value: float = 8.0e4
    channels: tuple = ()    # (ix0, ix1, iy0, iy1) half-open cell ranges
    inclusions: tuple = ()  # (ix0, iy0, size)

    def validate(self):
        if self.n < 1:
            raise CoefficientError("field resolution must be >= 1")
        for v in (self.background, self.channel_value, self.inclusion_value):
            if v <= 0:
                raise CoefficientError("layout values must be positive")
        for c in self.channels:
            ix0, ix1, iy0, iy1 = c
            if not (0 <= ix0 < ix1 <= self.n and 0 <= iy0 < iy1 <= self.n):
                raise CoefficientError(f"channel {c} leaves the grid")
        for q in self.inclusions:
            ix0, iy0, s = q
            if s < 1 or ix0 < 0 or iy0 < 0 or ix0 + s > self.n or iy0 + s > self.n:
                raise CoefficientError(f"inclusion {q} leaves the grid")


def build_channel_field(layout):
    layout.validate()
    v = np.full((layout.n, layout.n), layout.background)
    for ix0, iy0, s in layout.inclusions:
        v[iy0:iy0 + s, ix0:ix0 + s] = layout.inclusion_value
    for ix0, ix1, iy0, iy1 in layout.channels:
        v[iy0:iy1, ix0:ix1] = layout.channel_value
    return GridField(v)


def export_grid_field(field, stream):
    """Text format: first line the resolution, then n*n values row-major
    (row iy=0 first)."""
    stream.write(f"{field.n}\n")
    for row in field.values:
        stream.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def import_grid_field(stream):
    head = stream.readline().split()
    if len(head) != 1:
        raise CoefficientError("bad grid field header")
    n = int(head[0])
    data = np.loadtxt(stream, dtype=np.float64, ndmin=2)
    if data.shape != (n, n):
        raise CoefficientError(
            f"grid field body has shape {data.shape}, expected ({n}, {n})")
    return GridField(data)
