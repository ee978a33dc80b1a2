"""Build a two-region partition and look around.

The domain splits into a refined region (a union of coarse-aligned
rectangles, meshed at the fine scale) and its complement (coarse mesh
plus a matching fine submesh used for corrector computations).  Vertices
along the interface exist on both sides; the interface edge list drives
the penalty coupling.
"""

import numpy as np

from felodm import UNIT_SQUARE, L_SHAPE, partition_domain

part = partition_domain(UNIT_SQUARE, [(0.25, 0.25, 0.5, 0.5)], H=2**-2, h=2**-4)

print("coarse cells per side:", part.coarse_n)
print("fine cells per side:  ", part.fine_n)
print("refined-region mesh:  ", part.mesh1.num_vertices, "vertices,",
      part.mesh1.num_triangles, "triangles")
print("complement fine mesh: ", part.mesh2.num_vertices, "vertices,",
      part.mesh2.num_triangles, "triangles")
print("complement coarse mesh:", part.mesh2H.num_triangles, "triangles")
print("interface edges:      ", part.num_interface_edges)

# Each complement fine triangle knows its coarse parent.
counts = np.bincount(part.parent)
print("fine children per coarse element:", set(counts.tolist()))

# The same works on the L-shaped domain.
lpart = partition_domain(L_SHAPE, [(0.375, 0.375, 0.5, 0.625),
                                   (0.5, 0.5, 0.625, 0.625)], H=2**-3, h=2**-5)
print("L-shape interface edges:", lpart.num_interface_edges)
