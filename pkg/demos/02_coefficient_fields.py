"""Sample the coefficient families used in the experiments.

Analytic periodic fields are evaluated at element centroids; grid fields
hold one value per cell of a Cartesian lattice and behave the same way.
"""

import numpy as np

from felodm import (
    RandomFieldParams,
    UNIT_SQUARE,
    build_channel_field,
    build_uniform_tri_mesh,
    channel_layout,
    generate_lognormal_field,
    periodic_ratio_field,
    periodic_well_field,
    sample_per_element,
)

mesh = build_uniform_tri_mesh(UNIT_SQUARE, 64)

ratio = periodic_ratio_field(1 / 5)
vals = sample_per_element(ratio, mesh)
print("oscillatory ratio field: min %.3f max %.3f" % (vals.min(), vals.max()))

well = periodic_well_field(1 / 64)
vals = sample_per_element(well, mesh)
print("well-problem field:      min %.4f max %.4f" % (vals.min(), vals.max()))

params = RandomFieldParams(n=64, variance=1.5, corr_x=0.05, corr_y=0.05,
                           seed=123)
rand = generate_lognormal_field(params)
vals = sample_per_element(rand, mesh)
print("lognormal field:         contrast %.1f" % (vals.max() / vals.min()))

chan = build_channel_field(channel_layout(128))
print("channel field values:   ", sorted(set(chan.values.ravel().tolist())))
