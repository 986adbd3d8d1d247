"""Shoebox image-source simulation with direct plane-wave HOA encoding.

Each image source is treated as a plane wave arriving at the array centre
from the image's direction, delayed by ``distance / c`` and attenuated by
``beta ** order / distance``. No microphone capsules are simulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps_signal

from .errors import DomainError, InfeasibleRoomError
from .sphharm import Direction, n_channels, sh_matrix

SABINE_CONSTANT = 0.161
MIN_DISTANCE = 0.1


@dataclass(frozen=True)
class RoomSpec:
    """Rectangular room with uniform wall absorption derived from ``t60``."""

    dimensions: tuple[float, float, float]
    t60: float
    c: float = 343.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or min(dims) <= 0:
            raise DomainError(f"room dimensions must be three positive lengths, got {self.dimensions}")
        if not self.t60 > 0 or not self.c > 0:
            raise DomainError("t60 and c must be positive")
        object.__setattr__(self, "dimensions", dims)
        alpha = self.absorption
        if not 0.0 < alpha < 1.0:
            raise InfeasibleRoomError(
                f"Sabine absorption {alpha:.4f} outside (0, 1) for room {dims} with T60={self.t60}s"
            )

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + ly * lz + lx * lz)

    @property
    def absorption(self) -> float:
        if math.isinf(self.t60):
            return 0.0
        return SABINE_CONSTANT * self.volume / (self.surface * self.t60)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, float)
        return bool(np.all(p > margin) and np.all(p < np.asarray(self.dimensions) - margin))


def sabine_beta(room: RoomSpec) -> float:
    """Pressure reflection coefficient ``sqrt(1 - alpha)`` shared by all six walls."""
    return math.sqrt(1.0 - room.absorption)


@dataclass(frozen=True)
class ImageSource:
    position: np.ndarray = field(compare=False)
    reflection_order: int
    amplitude: float
    delay: float


def image_direction(image: ImageSource, mic) -> Direction:
    return Direction.from_vector(np.asarray(image.position) - np.asarray(mic, float))


def _axis_images(u: np.ndarray, src: float, length: float) -> np.ndarray:
    # even u: translated copy; odd u: mirrored copy
    return np.where(u % 2 == 0, u * length + src, (u + 1) * length - src)


def image_lattice(room: RoomSpec, src, mic, max_order: int, max_distance: float | None = None):
    """Vectorised image enumeration.

    Returns ``(positions (n, 3), orders (n,), distances (n,))`` sorted by
    (order, distance). Each lattice index ``u`` per axis contributes
    ``|u|`` wall reflections.
    """
    src = np.asarray(src, float)
    mic = np.asarray(mic, float)
    if max_order < 0:
        raise DomainError("max_order must be non-negative")
    if not room.contains(src) or not room.contains(mic):
        raise DomainError("source and microphone must lie strictly inside the room")
    if np.allclose(src, mic):
        raise DomainError("source and microphone coincide")
    bounds = []
    for ax in range(3):
        b = max_order
        if max_distance is not None:
            b = min(b, int(math.ceil(max_distance / room.dimensions[ax])) + 1)
        bounds.append(np.arange(-b, b + 1))
    ux, uy, uz = np.meshgrid(*bounds, indexing="ij")
    ux, uy, uz = ux.ravel(), uy.ravel(), uz.ravel()
    order = np.abs(ux) + np.abs(uy) + np.abs(uz)
    keep = order <= max_order
    ux, uy, uz, order = ux[keep], uy[keep], uz[keep], order[keep]
    pos = np.stack(
        [_axis_images(u, src[ax], room.dimensions[ax]) for ax, u in enumerate((ux, uy, uz))], axis=1
    )
    dist = np.linalg.norm(pos - mic, axis=1)
    if max_distance is not None:
        keep = dist <= max_distance
        pos, order, dist = pos[keep], order[keep], dist[keep]
    idx = np.lexsort((dist, order))
    return pos[idx], order[idx], dist[idx]


def enumerate_images(room: RoomSpec, src, mic, max_order: int = 4) -> list[ImageSource]:
    """All shoebox images with at most ``max_order`` wall reflections.

    Amplitude follows ``beta ** order / d`` with ``d`` floored at 0.1 m;
    the delay is ``d / c``.
    """
    pos, order, dist = image_lattice(room, src, mic, max_order)
    beta = sabine_beta(room)
    d = np.maximum(dist, MIN_DISTANCE)
    return [
        ImageSource(p, int(o), float(beta ** int(o) / di), float(di / room.c))
        for p, o, di in zip(pos, order, d)
    ]


@dataclass(frozen=True)
class DoaSet:
    """Unordered collection of directions with optional per-entry source ids."""

    directions: tuple[Direction, ...] = ()
    source_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "directions", tuple(self.directions))
        if self.source_ids is not None:
            ids = tuple(int(s) for s in self.source_ids)
            if len(ids) != len(self.directions):
                raise DomainError("source_ids length must match directions")
            object.__setattr__(self, "source_ids", ids)

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)

    def __getitem__(self, i):
        return self.directions[i]

    def angles(self) -> np.ndarray:
        """(n, 2) array of (azimuth, elevation) in degrees."""
        if not self.directions:
            return np.zeros((0, 2))
        return np.array([(d.azimuth, d.elevation) for d in self.directions])

    def __add__(self, other: "DoaSet") -> "DoaSet":
        ids = None
        if self.source_ids is not None and other.source_ids is not None:
            ids = self.source_ids + other.source_ids
        return DoaSet(self.directions + other.directions, ids)


def first_order_truth(images: list[ImageSource], mic, source_id: int = 0) -> DoaSet:
    """Directions from the microphone to the direct source and its first-order images."""
    sel = [im for im in images if im.reflection_order <= 1]
    if not any(im.reflection_order == 0 for im in sel):
        raise DomainError("image list carries no direct path")
    dirs = tuple(image_direction(im, mic) for im in sel)
    return DoaSet(dirs, (source_id,) * len(dirs))


def _colored_noise(rng: np.random.Generator, n: int, fs: float) -> np.ndarray:
    # voiced-band excitation: low-passed white noise with a gentle pre-emphasis tilt
    b, a = sps_signal.butter(4, min(3400.0, 0.45 * fs) / (fs / 2), btype="low")
    x = sps_signal.lfilter(b, a, rng.standard_normal(n))
    b, a = sps_signal.butter(2, 100.0 / (fs / 2), btype="high")
    return sps_signal.lfilter(b, a, x)


def _syllable_envelope(rng: np.random.Generator, n: int, fs: float) -> np.ndarray:
    env = np.zeros(n)
    t = 0
    while t < n:
        if rng.random() < 0.2:
            t += int(rng.uniform(0.05, 0.25) * fs)  # pause
            continue
        length = int(rng.uniform(0.08, 0.3) * fs)
        seg = min(length, n - t)
        env[t : t + seg] = np.sin(np.pi * np.arange(seg) / length) ** 2 * rng.uniform(0.3, 1.0)
        t += seg
    return env


def synth_source(kind: str, duration_samples: int, fs: float = 16000, seed: int = 0, path=None) -> np.ndarray:
    """Deterministic source signal.

    ``kind`` is ``"white"`` (unit-variance Gaussian), ``"speech-like"``
    (syllable-rate amplitude-modulated, low-passed coloured noise with
    pauses, zero mean, unit RMS) or ``"file"`` (read from ``path`` via
    :func:`hoadoa.dataset.read_wav`, looped or cropped to length).
    """
    n = int(duration_samples)
    if n <= 0:
        raise DomainError("duration_samples must be positive")
    rng = np.random.default_rng(seed)
    if kind == "white":
        return rng.standard_normal(n)
    if kind == "speech-like":
        x = _colored_noise(rng, n, fs) * _syllable_envelope(rng, n, fs)
        x -= x.mean()
        rms = np.sqrt(np.mean(x * x))
        return x / rms if rms > 0 else x
    if kind == "file":
        from .dataset import read_wav

        data, file_fs = read_wav(path, expected_fs=int(fs))
        if len(data) == 0:
            raise DomainError(f"{path} contains no samples")
        start = int(rng.integers(0, len(data))) if len(data) > n else 0
        idx = (start + np.arange(n)) % len(data)
        return data[idx].astype(float)
    raise DomainError(f"unknown source kind {kind!r}")


@dataclass(frozen=True)
class HoaFrame:
    order: int
    samples: np.ndarray = field(compare=False)
    fs: float = 16000.0

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[0] != n_channels(self.order):
            raise DomainError(f"expected {n_channels(self.order)} channels, got shape {s.shape}")
        if s.shape[1] == 0:
            raise DomainError("HOA frame must contain at least one sample")

    @property
    def length(self) -> int:
        return self.samples.shape[1]


def _delay_linear(signal: np.ndarray, delays: np.ndarray, n_out: int, start: int = 0) -> np.ndarray:
    """Rows ``s(t - delay_i)`` for ``t = start .. start + n_out - 1``, zero before t=0."""
    t = start + np.arange(n_out)[None, :] - delays[:, None]
    i0 = np.floor(t).astype(np.int64)
    frac = t - i0
    padded = np.concatenate([[0.0], signal, [0.0]])
    lo = np.clip(i0, -1, len(signal)) + 1
    hi = np.clip(i0 + 1, -1, len(signal)) + 1
    return (1.0 - frac) * padded[lo] + frac * padded[hi]


def encode_hoa(images, signal, order: int, fs: float, mic=None, n_samples: int | None = None, start: int = 0) -> HoaFrame:
    """Superpose every image as a delayed, scaled plane wave in the HOA domain.

    Parameters
    ----------
    images : sequence of ImageSource
        Image positions are turned into directions relative to ``mic``
        (default: origin).
    signal : array_like
        Dry source signal ``s``; samples before index 0 are zero.
    order : int
        HOA order.
    fs : float
        Sample rate in Hz.
    n_samples, start : int, optional
        Output window ``[start, start + n_samples)``; default covers the
        input length.

    Returns
    -------
    HoaFrame
        ``B[c, t] = sum_i a_i * s(t - fs * tau_i) * Y_c(dir_i)``, fractional
        delays by two-tap linear interpolation.
    """
    if order < 0 or fs <= 0:
        raise DomainError("order must be >= 0 and fs > 0")
    if len(images) == 0:
        raise DomainError("no image sources to encode")
    mic = np.zeros(3) if mic is None else np.asarray(mic, float)
    signal = np.asarray(signal, float)
    n_out = len(signal) - start if n_samples is None else int(n_samples)
    pos = np.array([im.position for im in images], float) - mic
    amp = np.array([im.amplitude for im in images])
    delays = np.array([im.delay for im in images]) * fs
    r = np.linalg.norm(pos, axis=1)
    az = np.degrees(np.arctan2(pos[:, 1], pos[:, 0]))
    el = np.degrees(np.arcsin(np.clip(pos[:, 2] / r, -1.0, 1.0)))
    Y = sh_matrix(order, az, el)  # (n_img, M)
    delayed = _delay_linear(signal, delays, n_out, start)
    return HoaFrame(order, (Y * amp[:, None]).T @ delayed, fs)


def impulse_response(
    room: RoomSpec, src, mic, fs: float, duration: float, max_order: int | None = None, highpass: float | None = 100.0
) -> np.ndarray:
    """Omnidirectional (W-channel-like) room impulse response.

    Images are kept up to ``max_order`` reflections and within the
    distance travelled in ``duration`` seconds; each contributes a
    linearly interpolated impulse.

    With uniform positive reflection coefficients every image adds a
    same-signed impulse, so the dense tail piles up a spurious
    low-frequency component that decays far slower than the image
    energies. ``highpass`` (Hz, 4th-order Butterworth, causal) removes
    it; pass ``None`` for the raw sum.
    """
    max_d = room.c * duration
    if max_order is None:
        max_order = int(sum(math.ceil(max_d / L) + 1 for L in room.dimensions))
    pos, order, dist = image_lattice(room, src, mic, max_order, max_distance=max_d)
    beta = sabine_beta(room)
    amp = beta ** order.astype(float) / np.maximum(dist, MIN_DISTANCE)
    n = int(math.ceil(duration * fs)) + 2
    t = dist / room.c * fs
    i0 = np.floor(t).astype(np.int64)
    frac = t - i0
    h = np.zeros(n)
    ok = i0 + 1 < n
    np.add.at(h, i0[ok], amp[ok] * (1 - frac[ok]))
    np.add.at(h, i0[ok] + 1, amp[ok] * frac[ok])
    if highpass is not None:
        if not 0 < highpass < fs / 2:
            raise DomainError("highpass cutoff must lie in (0, fs/2)")
        h = sps_signal.sosfilt(sps_signal.butter(4, highpass, "highpass", fs=fs, output="sos"), h)
    return h


def schroeder_t60(h: np.ndarray, fs: float, db_range: tuple[float, float] = (-5.0, -25.0)) -> float:
    """T60 from a linear fit to the Schroeder energy decay curve.

    The fit spans ``db_range`` of the backward-integrated energy and is
    extrapolated to 60 dB (T20 by default).
    """
    e = np.cumsum((h ** 2)[::-1])[::-1]
    if e[0] <= 0:
        raise DomainError("impulse response carries no energy")
    edc = 10.0 * np.log10(np.maximum(e / e[0], 1e-300))
    hi, lo = db_range
    i1 = int(np.argmax(edc <= hi))
    i2 = int(np.argmax(edc <= lo))
    if i2 <= i1:
        raise DomainError("decay curve does not span the fit range")
    t = np.arange(i1, i2 + 1) / fs
    slope, _ = np.polyfit(t, edc[i1 : i2 + 1], 1)
    return -60.0 / slope
