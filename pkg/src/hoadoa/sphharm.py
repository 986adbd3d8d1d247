"""Real spherical harmonics, manifold vectors and the direction grid.

Conventions
-----------
* Real, fully orthonormal (N3D) harmonics without the Condon-Shortley phase.
* ACN channel ordering, ``acn = n * (n + 1) + m``.
* Azimuth in degrees, wrapped into ``[-180, 180)``; elevation in degrees
  measured from the horizontal plane, ``+90`` pointing up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError

MAX_ORDER = 8


def wrap_azimuth(az):
    """Wrap azimuth (degrees, scalar or array) into [-180, 180)."""
    return (np.asarray(az, dtype=float) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Direction:
    """A point on the unit sphere, in degrees."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        el = float(self.elevation)
        if not np.isfinite(el) or el < -90.0 or el > 90.0:
            raise DomainError(f"elevation {el} outside [-90, 90]")
        if not np.isfinite(self.azimuth):
            raise DomainError(f"azimuth {self.azimuth} is not finite")
        object.__setattr__(self, "azimuth", float(wrap_azimuth(self.azimuth)))
        object.__setattr__(self, "elevation", el)

    @classmethod
    def from_vector(cls, v) -> "Direction":
        """Direction of a (non-zero) Cartesian vector."""
        x, y, z = (float(c) for c in v)
        r = math.sqrt(x * x + y * y + z * z)
        if r == 0.0:
            raise DomainError("zero vector has no direction")
        el = math.degrees(math.asin(max(-1.0, min(1.0, z / r))))
        return cls(math.degrees(math.atan2(y, x)), el)

    def unit_vector(self) -> np.ndarray:
        az, el = np.radians(self.azimuth), np.radians(self.elevation)
        return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def n_channels(order: int) -> int:
    return (order + 1) ** 2


def acn(n: int, m: int) -> int:
    return n * (n + 1) + m


def _check_order(order: int) -> None:
    if order < 0 or order > MAX_ORDER:
        raise DomainError(f"order {order} outside [0, {MAX_ORDER}]")


def _legendre_table(order: int, x: np.ndarray) -> dict:
    """Associated Legendre P_n^m(x), m >= 0, without Condon-Shortley phase."""
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = {(0, 0): np.ones_like(x)}
    for m in range(1, order + 1):
        P[m, m] = (2 * m - 1) * s * P[m - 1, m - 1]
    for m in range(0, order):
        P[m + 1, m] = (2 * m + 1) * x * P[m, m]
    for m in range(0, order + 1):
        for n in range(m + 2, order + 1):
            P[n, m] = ((2 * n - 1) * x * P[n - 1, m] - (n + m - 1) * P[n - 2, m]) / (n - m)
    return P


def _norm(n: int, m: int) -> float:
    m = abs(m)
    return math.sqrt(
        (2 * n + 1) / (4 * math.pi) * (1 if m == 0 else 2) * math.factorial(n - m) / math.factorial(n + m)
    )


def sh_matrix(order: int, azimuth, elevation) -> np.ndarray:
    """Real SH up to ``order`` at the given angles (degrees).

    Parameters
    ----------
    order : int
        Maximum SH order N.
    azimuth, elevation : array_like
        Broadcastable angle arrays in degrees.

    Returns
    -------
    Y : ndarray, shape ``broadcast_shape + ((N+1)**2,)``
        ACN-ordered harmonics.
    """
    _check_order(order)
    az, el = np.broadcast_arrays(np.radians(np.asarray(azimuth, float)), np.radians(np.asarray(elevation, float)))
    P = _legendre_table(order, np.sin(el))
    Y = np.empty(az.shape + (n_channels(order),))
    for n in range(order + 1):
        for m in range(-n, n + 1):
            base = _norm(n, m) * P[n, abs(m)]
            if m > 0:
                base = base * np.cos(m * az)
            elif m < 0:
                base = base * np.sin(-m * az)
            Y[..., acn(n, m)] = base
    return Y


def real_sh(n: int, m: int, direction: Direction) -> float:
    """Single real N3D harmonic of degree ``n`` and order ``m``."""
    if n < 0 or abs(m) > n:
        raise DomainError(f"invalid harmonic index (n={n}, m={m})")
    return float(sh_matrix(n, direction.azimuth, direction.elevation)[acn(n, m)])


@dataclass(frozen=True)
class ManifoldVector:
    order: int
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        if len(self.values) != n_channels(self.order):
            raise DomainError("manifold length does not match order")

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def manifold_vector(direction: Direction, order: int) -> ManifoldVector:
    """Frequency-independent steering vector y(direction) of length (N+1)^2."""
    return ManifoldVector(order, sh_matrix(order, direction.azimuth, direction.elevation))


@dataclass(frozen=True)
class GridSpec:
    """Equi-angular elevation x azimuth grid, bins indexed from the south-west."""

    n_elevation: int = 60
    n_azimuth: int = 120
    resolution: float = 3.0

    def __post_init__(self):
        if not (
            math.isclose(self.n_elevation * self.resolution, 180.0)
            and math.isclose(self.n_azimuth * self.resolution, 360.0)
        ):
            raise DomainError("grid bins must tile the sphere exactly")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_elevation, self.n_azimuth)

    @property
    def size(self) -> int:
        return self.n_elevation * self.n_azimuth

    def elevations(self) -> np.ndarray:
        return -90.0 + self.resolution * (np.arange(self.n_elevation) + 0.5)

    def azimuths(self) -> np.ndarray:
        return -180.0 + self.resolution * (np.arange(self.n_azimuth) + 0.5)

    def center(self, i: int, j: int) -> Direction:
        return Direction(-180.0 + self.resolution * (j + 0.5), -90.0 + self.resolution * (i + 0.5))

    def nearest_cell(self, direction: Direction) -> tuple[int, int]:
        i = int(math.floor((direction.elevation + 90.0) / self.resolution))
        j = int(math.floor((direction.azimuth + 180.0) / self.resolution))
        return min(max(i, 0), self.n_elevation - 1), j % self.n_azimuth

    def flat_index(self, i: int, j: int) -> int:
        return i * self.n_azimuth + j


DEFAULT_GRID = GridSpec()


def build_grid(spec: GridSpec = DEFAULT_GRID) -> list[Direction]:
    """All bin centres, row-major: ``index = i_elevation * n_azimuth + j_azimuth``."""
    return [spec.center(i, j) for i in range(spec.n_elevation) for j in range(spec.n_azimuth)]


def grid_angles(spec: GridSpec = DEFAULT_GRID) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth, elevation) arrays of shape ``spec.shape``."""
    el, az = np.meshgrid(spec.elevations(), spec.azimuths(), indexing="ij")
    return az, el


@lru_cache(maxsize=16)
def grid_manifold(order: int, spec: GridSpec = DEFAULT_GRID) -> np.ndarray:
    """Manifold matrix of shape ((N+1)^2, n_cells), columns in grid order. Read-only."""
    az, el = grid_angles(spec)
    Y = np.ascontiguousarray(sh_matrix(order, az.ravel(), el.ravel()).T)
    Y.setflags(write=False)
    return Y


def angular_distance(a: Direction, b: Direction) -> float:
    """Great-circle angle in degrees between two directions."""
    return float(angular_distance_deg(a.azimuth, a.elevation, b.azimuth, b.elevation))


def angular_distance_deg(az1, el1, az2, el2):
    """Vectorised great-circle angle in degrees.

    Same quantity as the spherical law of cosines, evaluated in the atan2
    (Vincenty) form so that nearly coincident points keep full precision.
    """
    az1, el1, az2, el2 = (np.radians(np.asarray(v, float)) for v in (az1, el1, az2, el2))
    d = az2 - az1
    num = np.hypot(np.cos(el2) * np.sin(d), np.cos(el1) * np.sin(el2) - np.sin(el1) * np.cos(el2) * np.cos(d))
    den = np.sin(el1) * np.sin(el2) + np.cos(el1) * np.cos(el2) * np.cos(d)
    return np.clip(np.degrees(np.arctan2(num, den)), 0.0, 180.0)
