"""Element correctors and their decay with the patch radius.

Every coarse element of the complement region contributes a fine-scale
correction to each coarse basis function it touches.  The correction is
computed on an element patch; enlarging the patch converges to the
global corrector exponentially fast, which is what makes localization
affordable.
"""

import numpy as np

from felodm import (
    MultiscaleSetup,
    UNIT_SQUARE,
    corrector_decay,
    partition_domain,
    periodic_ratio_field,
    saturation_level,
)

part = partition_domain(UNIT_SQUARE, [(0.25, 0.25, 0.375, 0.375)],
                        H=2**-3, h=2**-5)
setup = MultiscaleSetup(part, periodic_ratio_field(1 / 5))

levels = [1, 2, 3, 4]
elements, errors, saturated = corrector_decay(setup, levels)

print("coarse elements:", len(elements))
print("patch level saturates the domain at L =", saturation_level(part))

# Median corrector error per level, over the unsaturated elements.
for j, lvl in enumerate(levels):
    live = errors[~saturated[:, j], j]
    print(f"L={lvl}: median corrector error {np.median(live):.3e}"
          if live.size else f"L={lvl}: all patches saturated")
