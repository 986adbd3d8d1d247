"""Spatial pseudo-spectrum maps: Gaussian labels, normalisation, peak picking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .roomsim import DoaSet
from .sphharm import DEFAULT_GRID, Direction, GridSpec

KINDS = ("label", "network-output", "beamformer")


@dataclass(frozen=True)
class SpsGrid:
    values: np.ndarray = field(compare=False)
    kind: str = "beamformer"

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 1 and v.size == DEFAULT_GRID.size:
            v = v.reshape(DEFAULT_GRID.shape)
        if v.ndim != 2:
            raise DomainError(f"SPS must be 2-D, got shape {v.shape}")
        if self.kind not in KINDS:
            raise DomainError(f"unknown SPS kind {self.kind!r}")
        if self.kind != "beamformer" and v.size and (v.min() < 0 or v.max() > 1):
            raise DomainError(f"{self.kind} values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(sps) -> np.ndarray:
    return sps.values if isinstance(sps, SpsGrid) else np.asarray(sps, float)


def gaussian_label(truth: DoaSet, grid: GridSpec = DEFAULT_GRID, sigma2: float = 5.0) -> SpsGrid:
    """Gaussian-smoothed 0/1 map of the truth directions.

    Every truth marks its nearest cell; the cell is then spread with
    ``exp(-(d_az**2 + d_el**2) / (2 * sigma2))``, offsets in degrees
    between bin centres and azimuth taken modulo 360. Overlaps combine by
    maximum and the map peaks at exactly 1.
    """
    if sigma2 <= 0:
        raise DomainError("sigma2 must be positive")
    out = np.zeros(grid.shape)
    if len(truth) == 0:
        return SpsGrid(out, "label")
    el_c = grid.elevations()
    az_c = grid.azimuths()
    for d in truth:
        i, j = grid.nearest_cell(d)
        d_el = el_c - el_c[i]
        d_az = (az_c - az_c[j] + 180.0) % 360.0 - 180.0
        g = np.exp(-(d_el[:, None] ** 2 + d_az[None, :] ** 2) / (2.0 * sigma2))
        np.maximum(out, g, out=out)
    return SpsGrid(out / out.max(), "label")


def normalize_map(sps) -> SpsGrid:
    """Affine rescale to [0, 1]; a constant map becomes all zeros."""
    v = _values(sps)
    kind = sps.kind if isinstance(sps, SpsGrid) else "beamformer"
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return SpsGrid(np.zeros_like(v), kind)
    return SpsGrid(np.clip((v - lo) / (hi - lo), 0.0, 1.0), kind)


def peak_mask(v: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Cells above ``threshold`` that beat their 8 neighbours.

    Azimuth (axis 1) wraps; elevation edges only compare with existing
    rows. Equal neighbours lose to the one with the lower linear index.
    """
    n_el, n_az = v.shape
    idx = np.arange(v.size).reshape(v.shape)
    pad_v = np.full((n_el + 2, n_az), -np.inf)
    pad_v[1:-1] = v
    pad_i = np.full((n_el + 2, n_az), -1)
    pad_i[1:-1] = idx
    mask = v > threshold
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nv = np.roll(pad_v, -dj, axis=1)[1 + di : 1 + di + n_el]
            ni = np.roll(pad_i, -dj, axis=1)[1 + di : 1 + di + n_el]
            mask &= (v > nv) | ((v == nv) & (idx < ni))
    return mask


def extract_peaks(sps, threshold: float = 0.5, grid: GridSpec = DEFAULT_GRID) -> DoaSet:
    """Local maxima above ``threshold`` as bin-centre directions, strongest first."""
    v = _values(sps)
    ii, jj = np.nonzero(peak_mask(v, threshold))
    order = np.lexsort((ii * v.shape[1] + jj, -v[ii, jj]))
    return DoaSet(tuple(grid.center(int(ii[k]), int(jj[k])) for k in order))


def top_peaks(sps, k: int, grid: GridSpec = DEFAULT_GRID) -> DoaSet:
    """The ``k`` strongest local maxima, for when the source count is known."""
    return DoaSet(extract_peaks(sps, -np.inf, grid).directions[:k])


def peak_angles(sps, threshold: float = 0.5, grid: GridSpec = DEFAULT_GRID) -> np.ndarray:
    """Array form of :func:`extract_peaks`: (n, 2) azimuth/elevation rows."""
    v = _values(sps)
    ii, jj = np.nonzero(peak_mask(v, threshold))
    order = np.lexsort((ii * v.shape[1] + jj, -v[ii, jj]))
    ii, jj = ii[order], jj[order]
    return np.stack([grid.azimuths()[jj], grid.elevations()[ii]], axis=1)


def cell_direction(grid: GridSpec, flat_index: int) -> Direction:
    i, j = divmod(int(flat_index), grid.n_azimuth)
    return grid.center(i, j)
