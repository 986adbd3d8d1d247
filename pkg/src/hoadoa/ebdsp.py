"""Eigenbeam-domain covariance estimation and classical spatial spectra."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericalError
from .roomsim import HoaFrame
from .sphharm import DEFAULT_GRID, GridSpec, grid_manifold, n_channels


@dataclass(frozen=True)
class CovarianceMatrix:
    order: int
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        M = n_channels(self.order)
        v = np.asarray(self.values, float)
        if v.shape != (M, M):
            raise DomainError(f"covariance must be {M}x{M}, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.values))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _samples(frame) -> tuple[int, np.ndarray]:
    if isinstance(frame, HoaFrame):
        return frame.order, np.asarray(frame.samples, float)
    B = np.asarray(frame, float)
    order = int(round(np.sqrt(B.shape[0]))) - 1
    return order, B


def time_cov(frame) -> CovarianceMatrix:
    """Broadband covariance ``B B^T / L`` of a time-domain HOA block."""
    order, B = _samples(frame)
    L = B.shape[1]
    if L == 0:
        raise DomainError("empty frame")
    if L < B.shape[0]:
        warnings.warn(f"frame length {L} below channel count {B.shape[0]}; covariance is rank deficient")
    R = B @ B.T / L
    return CovarianceMatrix(order, 0.5 * (R + R.T))


def freq_smoothed_cov(frame, band: tuple[int, int] | None = None) -> CovarianceMatrix:
    """Sum of per-bin covariances ``Re{X_k X_k^H}`` over a one-sided DFT band.

    ``band`` is an inclusive ``(low, high)`` bin range within ``[0, L // 2]``;
    ``None`` selects the full band. Interior bins are counted twice to stand
    in for their negative-frequency mirror, and the sum is scaled by
    ``1 / L**2`` so that the full band reproduces :func:`time_cov`.
    """
    order, B = _samples(frame)
    L = B.shape[1]
    if L == 0:
        raise DomainError("empty frame")
    nyq = L // 2
    lo, hi = (0, nyq) if band is None else (int(band[0]), int(band[1]))
    if lo > hi:
        raise DomainError(f"empty band [{lo}, {hi}]")
    if lo < 0 or hi > nyq:
        raise DomainError(f"band [{lo}, {hi}] outside [0, {nyq}]")
    X = np.fft.rfft(B, axis=1)[:, lo : hi + 1]
    k = np.arange(lo, hi + 1)
    w = np.where((k == 0) | ((L % 2 == 0) & (k == nyq)), 1.0, 2.0)
    Xw = X * np.sqrt(w)
    R = (Xw.real @ Xw.real.T + Xw.imag @ Xw.imag.T) / L**2
    return CovarianceMatrix(order, 0.5 * (R + R.T))


def diag_load(cov: CovarianceMatrix, eps: float = 1e-6) -> CovarianceMatrix:
    """Add ``eps * trace / M`` to the diagonal."""
    if eps < 0:
        raise DomainError("loading must be non-negative")
    if eps == 0:
        return cov
    R = cov.values
    delta = eps * np.trace(R) / R.shape[0]
    return CovarianceMatrix(cov.order, R + delta * np.eye(R.shape[0]))


def _as_cov(cov) -> CovarianceMatrix:
    if isinstance(cov, CovarianceMatrix):
        return cov
    R = np.asarray(cov, float)
    return CovarianceMatrix(int(round(np.sqrt(R.shape[0]))) - 1, R)


def eb_mvdr_spectrum(cov, grid: GridSpec = DEFAULT_GRID, eps: float = 1e-6) -> np.ndarray:
    """MVDR power ``1 / (y^T R^-1 y)`` on every grid cell.

    The covariance is diagonally loaded and Cholesky-factorised; the
    quadratic form is ``||L^-1 y||^2``. Returns an array of ``grid.shape``.
    """
    cov = diag_load(_as_cov(cov), eps)
    try:
        chol = linalg.cholesky(cov.values, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"covariance not positive definite after loading: {exc}") from exc
    Z = linalg.solve_triangular(chol, grid_manifold(cov.order, grid), lower=True)
    q = np.einsum("ij,ij->j", Z, Z)
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise NumericalError("non-finite MVDR quadratic form")
    return (1.0 / q).reshape(grid.shape)


def default_subspace_dim(n_sources: int, order: int) -> int:
    """Signal-subspace size: seven arrivals (direct + first order) per source."""
    return max(1, min(7 * n_sources, n_channels(order) - 1))


def eb_music_spectrum(cov, grid: GridSpec = DEFAULT_GRID, n_signals: int | None = None, eps: float = 1e-6) -> np.ndarray:
    """MUSIC pseudo-spectrum ``1 / ||U_n^T y||^2``.

    ``n_signals`` is the assumed number of arrivals ``D``; the noise
    subspace holds the eigenvectors of the ``M - D`` smallest eigenvalues.
    Defaults to :func:`default_subspace_dim` for one source.
    """
    cov = diag_load(_as_cov(cov), eps)
    M = cov.size
    D = default_subspace_dim(1, cov.order) if n_signals is None else int(n_signals)
    if not 1 <= D < M:
        raise DomainError(f"signal subspace dimension {D} must lie in [1, {M - 1}]")
    _, V = linalg.eigh(cov.values)
    Un = V[:, : M - D]
    P = Un.T @ grid_manifold(cov.order, grid)
    return (1.0 / (np.einsum("ij,ij->j", P, P) + 1e-12)).reshape(grid.shape)
