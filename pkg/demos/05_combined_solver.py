"""Run the combined method next to the fine reference and the baseline.

The combined solve keeps plain fine elements on the refined region and
corrected coarse basis functions elsewhere, so its system is a fraction
of the reference size.  The pure coarse baseline uses corrected basis
functions everywhere.
"""

import numpy as np

from felodm import (
    UNIT_SQUARE,
    VolumeLoad,
    error_report,
    partition_domain,
    periodic_ratio_field,
    sample_per_element,
    solve_fe_lodm,
    solve_ideal,
    solve_lodm_baseline,
    solve_reference,
    transfer_fine_values,
)

H, h = 2**-3, 2**-6
rects = [(0.25, 0.25, 0.375, 0.375)]
part = partition_domain(UNIT_SQUARE, rects, H, h)
coeff = periodic_ratio_field(1 / 5)
load = VolumeLoad(lambda x, y: np.ones_like(x))
a1 = sample_per_element(coeff, part.mesh1)
a2 = sample_per_element(coeff, part.mesh2)

ref = solve_reference(part, coeff, load=load)
print(f"reference: {ref.system_size} unknowns")

for solver, label in ((lambda *a, **kw: solve_fe_lodm(*a, level=2, **kw), "combined"),
                      (solve_ideal, "ideal")):
    res = solver(part, coeff, load=load)
    rep = error_report(part, a1, a2, res.layout, ref.u, res.u)
    print(f"{label:9s} {res.system_size:5d} unknowns  "
          f"energy {rep['omega']['energy']:.3e}  l2 {rep['omega']['l2']:.3e}")

base = solve_lodm_baseline(UNIT_SQUARE, H, h, coeff, load=load, level=2)
u = transfer_fine_values(base, part, ref.layout)
rep = error_report(part, a1, a2, ref.layout, ref.u, u)
print(f"baseline  {base.system_size:5d} unknowns  "
      f"energy {rep['omega']['energy']:.3e}  l2 {rep['omega']['l2']:.3e}")
