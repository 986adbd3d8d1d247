"""Real spherical harmonics, the steering manifold and the search grid.

Run: python demos/01_spherical_harmonics.py
"""
import numpy as np

from hoadoa.sphharm import (
    DEFAULT_GRID,
    Direction,
    acn,
    angular_distance,
    grid_manifold,
    manifold_vector,
    n_channels,
)

# An order-4 encoding has (4+1)^2 = 25 channels, in ACN order.
print("channels:", n_channels(4), " ACN of (n=2, m=-1):", acn(2, -1))

# Fully orthonormal basis: by the addition theorem |y|^2 = (N+1)^2 / (4 pi) everywhere.
for d in (Direction(0, 0), Direction(120, 45), Direction(-60, -80)):
    y = np.asarray(manifold_vector(d, 4))
    print(f"|y({d.azimuth:5.0f}, {d.elevation:4.0f})|^2 = {y @ y:.6f}  (25 / 4pi = {25 / (4 * np.pi):.6f})")

# Quadrature over the 3-degree grid: the area-weighted Gram matrix is ~ I.
Y = grid_manifold(4)  # (25, 7200)
el = np.radians(DEFAULT_GRID.elevations())
w = np.repeat(np.cos(el), DEFAULT_GRID.n_azimuth) * np.radians(3.0) ** 2
G = (Y * w) @ Y.T
print("max |G - I| on the grid:", np.abs(G - np.eye(25)).max())

# Angular distance is the great-circle angle, robust near 0 and 180 degrees.
a, b = Direction(10, 20), Direction(-170, -20)
print("antipodal check:", angular_distance(a, b))
print("tiny separation:", angular_distance(Direction(0, 0), Direction(1e-6, 0)))
