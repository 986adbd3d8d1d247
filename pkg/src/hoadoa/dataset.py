"""Simulated HOA covariance datasets, record files and WAV ingestion.

Record file layout (little-endian)::

    b"EBDOA1"  u16 version  u64 count
    per record:
        f32[625] feature       f32[7200] label
        u8 n_sources           u16 n_truth
        n_truth x (f32 az, f32 el, u8 source_id)
        f32 t60  f32[3] room   f32[3] mic
        n_sources x f32[3] source position

A JSON manifest (``<dataset>.manifest``) echoes the generation config and
master seed.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
import wave
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .ebdsp import CovarianceMatrix, time_cov
from .errors import ConfigError, DatasetFormatError, DomainError, InfeasibleRoomError, WavFormatError
from .roomsim import DoaSet, HoaFrame, RoomSpec, encode_hoa, enumerate_images, first_order_truth, synth_source
from .sphharm import DEFAULT_GRID, Direction, n_channels
from .sps import gaussian_label

MAGIC = b"EBDOA1"
VERSION = 1
FEATURE_LEN = 625
LABEL_SHAPE = DEFAULT_GRID.shape
LABEL_LEN = DEFAULT_GRID.size
TRUTH_PER_SOURCE = 7

_HEADER = struct.Struct("<6sHQ")
_COUNTS = struct.Struct("<BH")
_TRUTH = np.dtype([("az", "<f4"), ("el", "<f4"), ("sid", "u1")])


def featurize(cov) -> np.ndarray:
    """Row-major flattening of ``cov / trace(cov)``."""
    R = cov.values if isinstance(cov, CovarianceMatrix) else np.asarray(cov, float)
    tr = float(np.trace(R))
    if not tr > 0:
        raise DomainError(f"covariance trace must be positive, got {tr}")
    return (R / tr).ravel()


def unfeaturize(feature) -> np.ndarray:
    """Square trace-normalised covariance from a flattened feature."""
    f = np.asarray(feature, float)
    m = int(round(math.sqrt(f.size)))
    if m * m != f.size:
        raise DomainError(f"feature length {f.size} is not a square")
    R = f.reshape(m, m)
    return 0.5 * (R + R.T)


@dataclass
class DatasetRecord:
    feature: np.ndarray
    label: np.ndarray
    truth: DoaSet
    t60: float
    room: np.ndarray
    mic: np.ndarray
    sources: np.ndarray  # (n_sources, 3)

    def __post_init__(self):
        self.feature = np.asarray(self.feature, np.float32)
        self.label = np.asarray(self.label, np.float32).reshape(LABEL_SHAPE)
        self.room = np.asarray(self.room, np.float32).reshape(3)
        self.mic = np.asarray(self.mic, np.float32).reshape(3)
        self.sources = np.asarray(self.sources, np.float32).reshape(-1, 3)
        self.t60 = float(np.float32(self.t60))
        a = self.truth.angles().astype(np.float32)
        ids = self.truth.source_ids or (0,) * len(a)
        self.truth = DoaSet(tuple(Direction(float(x), float(y)) for x, y in a), ids)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def __eq__(self, other):
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.label, other.label)
            and self.truth == other.truth
            and self.t60 == other.t60
            and np.array_equal(self.room, other.room)
            and np.array_equal(self.mic, other.mic)
            and np.array_equal(self.sources, other.sources)
        )


@dataclass
class GenConfig:
    count: int = 100
    sources: tuple[int, int] = (1, 2)
    t60: tuple[float, float] = (0.3, 1.0)
    room_min: tuple[float, float, float] = (3.0, 3.0, 2.0)
    room_max: tuple[float, float, float] = (10.0, 10.0, 4.0)
    fs: int = 16000
    frame_length: int = 5000
    order: int = 4
    image_order: int = 4
    source_kind: str = "speech-like"
    wav_files: tuple[str, ...] = ()
    seed: int = 0
    wall_margin: float = 0.5
    min_separation: float = 1.0
    sigma2: float = 5.0
    max_retries: int = 100

    def __post_init__(self):
        self.sources = tuple(int(s) for s in self.sources)
        self.t60 = tuple(float(t) for t in self.t60)
        self.room_min = tuple(float(v) for v in self.room_min)
        self.room_max = tuple(float(v) for v in self.room_max)
        self.wav_files = tuple(str(p) for p in self.wav_files)
        if self.count < 0:
            raise ConfigError("count must be non-negative")
        if not 1 <= self.sources[0] <= self.sources[1] <= 255:
            raise ConfigError(f"invalid source count range {self.sources}")
        if not 0 < self.t60[0] <= self.t60[1]:
            raise ConfigError(f"invalid t60 range {self.t60}")
        if any(lo <= 2 * self.wall_margin or lo > hi for lo, hi in zip(self.room_min, self.room_max)):
            raise ConfigError("invalid room ranges for the wall margin")
        if self.frame_length <= 0 or self.fs <= 0 or self.order < 0 or self.image_order < 1:
            raise ConfigError("frame_length, fs must be positive, order >= 0 and image_order >= 1")
        if self.source_kind not in ("speech-like", "white", "file"):
            raise ConfigError(f"unknown source kind {self.source_kind!r}")
        if self.source_kind == "file" and not self.wav_files:
            raise ConfigError("source_kind 'file' needs wav_files")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generation keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "GenConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read generation config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


def record_seed(master: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) & (2**64 - 1), int(index)])


def _place(rng, dims, margin, avoid=None, min_sep=0.0, tries=200):
    dims = np.asarray(dims)
    for _ in range(tries):
        p = rng.uniform(margin, dims - margin)
        if avoid is None or all(np.linalg.norm(p - a) >= min_sep for a in avoid):
            return p
    return None


def simulate_frame(room: RoomSpec, sources, mic, signals, order: int, image_order: int, fs: float, frame_length: int):
    """Reverberant HOA frame for several sources plus their truth DOAs.

    The frame starts once the latest image of every source has arrived, so
    all simulated reflections are present throughout.
    """
    per_source = [enumerate_images(room, s, mic, image_order) for s in sources]
    start = int(math.ceil(max(im.delay for ims in per_source for im in ims) * fs)) + 1
    B = np.zeros((n_channels(order), frame_length))
    truth = DoaSet((), ())
    for sid, (ims, sig) in enumerate(zip(per_source, signals)):
        B += encode_hoa(ims, sig, order, fs, mic=mic, n_samples=frame_length, start=start).samples
        truth = truth + first_order_truth(ims, mic, source_id=sid)
    return HoaFrame(order, B, fs), truth, start


def generate_record(cfg: GenConfig, index: int) -> DatasetRecord:
    """Draw and simulate record ``index``; depends only on (cfg, index)."""
    rng = np.random.default_rng(record_seed(cfg.seed, index))
    lo, hi = np.array(cfg.room_min), np.array(cfg.room_max)
    for _ in range(cfg.max_retries):
        dims = rng.uniform(lo, hi)
        t60 = rng.uniform(*cfg.t60)
        n_src = int(rng.integers(cfg.sources[0], cfg.sources[1] + 1))
        try:
            room = RoomSpec(tuple(dims), t60)
        except InfeasibleRoomError:
            continue
        mic = _place(rng, dims, cfg.wall_margin)
        srcs = []
        for _ in range(n_src):
            p = _place(rng, dims, cfg.wall_margin, avoid=[mic], min_sep=cfg.min_separation)
            if p is None:
                break
            srcs.append(p)
        if len(srcs) < n_src:
            continue
        max_len = cfg.frame_length + int(math.ceil(_max_delay(room, cfg.image_order) * cfg.fs)) + 4
        signals = []
        for _ in range(n_src):
            kw = {"path": cfg.wav_files[int(rng.integers(len(cfg.wav_files)))]} if cfg.source_kind == "file" else {}
            signals.append(synth_source(cfg.source_kind, max_len, cfg.fs, int(rng.integers(2**63)), **kw))
        frame, truth, start = simulate_frame(room, srcs, mic, signals, cfg.order, cfg.image_order, cfg.fs, cfg.frame_length)
        if any(_silent(s, start, cfg.frame_length) for s in signals):
            continue
        cov = time_cov(frame)
        label = gaussian_label(truth, DEFAULT_GRID, cfg.sigma2)
        return DatasetRecord(featurize(cov), label.values, truth, t60, dims, mic, np.array(srcs))
    raise DomainError(f"record {index}: no feasible draw after {cfg.max_retries} retries")


def _max_delay(room: RoomSpec, image_order: int) -> float:
    # upper bound on any image distance with <= K reflections
    return (image_order + 1) * math.sqrt(sum(d * d for d in room.dimensions)) / room.c


def _silent(sig: np.ndarray, start: int, length: int) -> bool:
    peak2 = float(np.max(sig * sig))
    if peak2 == 0.0:
        return True
    return float(np.sum(sig[start : start + length] ** 2)) < 1e-6 * peak2 * length


def generate_dataset(cfg: GenConfig, out_path=None) -> list[DatasetRecord]:
    """Generate ``cfg.count`` records; optionally write them plus a manifest."""
    records = [generate_record(cfg, i) for i in range(cfg.count)]
    if out_path is not None:
        write_records(out_path, records)
        write_manifest(manifest_path(out_path), cfg, len(records))
    return records


def manifest_path(path) -> str:
    return os.fspath(path) + ".manifest"


def write_manifest(path, cfg: GenConfig, count: int) -> None:
    doc = {"format": MAGIC.decode(), "version": VERSION, "records": count, "seed": cfg.seed, "config": cfg.to_dict()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _encode_record(rec: DatasetRecord) -> bytes:
    if rec.feature.size != FEATURE_LEN:
        raise DatasetFormatError(f"feature length {rec.feature.size} != {FEATURE_LEN}")
    truth = np.zeros(len(rec.truth), _TRUTH)
    if len(rec.truth):
        a = rec.truth.angles()
        truth["az"], truth["el"] = a[:, 0], a[:, 1]
        truth["sid"] = rec.truth.source_ids
    parts = [
        rec.feature.astype("<f4").tobytes(),
        rec.label.astype("<f4").tobytes(),
        _COUNTS.pack(rec.n_sources, len(rec.truth)),
        truth.tobytes(),
        np.array([rec.t60], "<f4").tobytes(),
        rec.room.astype("<f4").tobytes(),
        rec.mic.astype("<f4").tobytes(),
        rec.sources.astype("<f4").tobytes(),
    ]
    return b"".join(parts)


def write_records(path, records) -> int:
    """Write records (any iterable) and patch the count; returns the count."""
    n = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0))
        for rec in records:
            fh.write(_encode_record(rec))
            n += 1
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, VERSION, n))
    return n


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DatasetFormatError(f"truncated file while reading {what} ({len(buf)} of {n} bytes)")
    return buf


def _decode_record(fh, i: int) -> DatasetRecord:
    feature = np.frombuffer(_read_exact(fh, 4 * FEATURE_LEN, f"record {i} feature"), "<f4")
    label = np.frombuffer(_read_exact(fh, 4 * LABEL_LEN, f"record {i} label"), "<f4")
    n_src, n_truth = _COUNTS.unpack(_read_exact(fh, _COUNTS.size, f"record {i} counts"))
    if n_src < 1 or n_truth != TRUTH_PER_SOURCE * n_src:
        raise DatasetFormatError(f"record {i}: {n_truth} truths for {n_src} sources")
    truth = np.frombuffer(_read_exact(fh, _TRUTH.itemsize * n_truth, f"record {i} truth"), _TRUTH)
    tail = np.frombuffer(_read_exact(fh, 4 * (7 + 3 * n_src), f"record {i} metadata"), "<f4")
    if not (np.all(np.isfinite(feature)) and np.all(np.isfinite(tail))):
        raise DatasetFormatError(f"record {i}: non-finite values")
    if not (np.all(label >= 0) and np.all(label <= 1)):
        raise DatasetFormatError(f"record {i}: label values outside [0, 1]")
    if np.any(truth["sid"] >= n_src):
        raise DatasetFormatError(f"record {i}: truth source id out of range")
    t60, room, mic = tail[0], tail[1:4], tail[4:7]
    if not (t60 > 0 and np.all(room > 0)):
        raise DatasetFormatError(f"record {i}: non-positive t60 or room size")
    try:
        dirs = tuple(Direction(float(a), float(e)) for a, e in zip(truth["az"], truth["el"]))
    except DomainError as exc:
        raise DatasetFormatError(f"record {i}: {exc}") from exc
    return DatasetRecord(feature, label, DoaSet(dirs, tuple(int(s) for s in truth["sid"])), t60, room, mic, tail[7:])


def _read_header(fh) -> int:
    head = fh.read(_HEADER.size)
    if len(head) < len(MAGIC) or head[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError("bad magic: not an EBDOA1 dataset")
    if len(head) != _HEADER.size:
        raise DatasetFormatError("truncated header")
    _, version, count = _HEADER.unpack(head)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version} (expected {VERSION})")
    return count


def iter_records(path):
    """Stream records one at a time."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DatasetFormatError(f"cannot open dataset {path}: {exc}") from exc
    with fh:
        count = _read_header(fh)
        for i in range(count):
            yield _decode_record(fh, i)
        if fh.read(1):
            raise DatasetFormatError(f"trailing bytes after {count} records")


def read_records(path) -> list[DatasetRecord]:
    return list(iter_records(path))


def read_record(path, index: int) -> DatasetRecord:
    for i, rec in enumerate(iter_records(path)):
        if i == index:
            return rec
    raise DomainError(f"record index {index} out of range")


def split(records, train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle, then the first ``round(fraction * n)`` go to training."""
    if not 0 < train_fraction < 1:
        raise DomainError("train_fraction must lie in (0, 1)")
    records = list(records)
    perm = np.random.default_rng(seed).permutation(len(records))
    n_train = int(round(train_fraction * len(records)))
    return [records[i] for i in perm[:n_train]], [records[i] for i in perm[n_train:]]


@dataclass
class ArrayDataset:
    """Stacked arrays for training and evaluation."""

    features: np.ndarray  # (n, F) float32
    labels: np.ndarray  # (n, 60, 120) float32
    truths: list = field(default_factory=list)  # (k, 2) az/el arrays
    t60: np.ndarray | None = None

    def __len__(self):
        return len(self.features)

    @classmethod
    def from_records(cls, records) -> "ArrayDataset":
        records = list(records)
        if not records:
            return cls(np.zeros((0, FEATURE_LEN), np.float32), np.zeros((0,) + LABEL_SHAPE, np.float32), [], np.zeros(0))
        return cls(
            np.stack([r.feature for r in records]),
            np.stack([r.label for r in records]),
            [r.truth.angles() for r in records],
            np.array([r.t60 for r in records]),
        )

    @classmethod
    def load(cls, path) -> "ArrayDataset":
        return cls.from_records(iter_records(path))

    def subset(self, idx) -> "ArrayDataset":
        idx = np.asarray(idx, dtype=int)
        return ArrayDataset(
            self.features[idx],
            self.labels[idx],
            [self.truths[i] for i in idx],
            None if self.t60 is None else self.t60[idx],
        )


def read_wav(path, expected_fs: int | None = 16000) -> tuple[np.ndarray, int]:
    """16-bit PCM WAV as floats in [-1, 1) (first channel only).

    A sample rate different from ``expected_fs`` raises; nothing is
    resampled. Pass ``expected_fs=None`` to accept any rate.
    """
    try:
        with wave.open(os.fspath(path) if not isinstance(path, io.IOBase) else path, "rb") as w:
            n_ch, width, fs, n = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError, struct.error) as exc:
        raise WavFormatError(f"malformed or unsupported WAV {path}: {exc}") from exc
    except OSError as exc:
        raise WavFormatError(f"cannot read WAV {path}: {exc}") from exc
    if width != 2:
        raise WavFormatError(f"unsupported encoding: {8 * width}-bit samples (16-bit PCM required)")
    if expected_fs is not None and fs != expected_fs:
        raise WavFormatError(f"sample rate {fs} Hz, {expected_fs} Hz required (no resampling)")
    data = np.frombuffer(raw[: len(raw) - len(raw) % (2 * n_ch)], "<i2").reshape(-1, n_ch)[:, 0]
    return data.astype(np.float64) / 32768.0, fs


def write_wav(path, samples, fs: int = 16000) -> None:
    """Write mono 16-bit PCM, clipping to the representable range."""
    x = np.clip(np.round(np.asarray(samples, float) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(fs)
        w.writeframes(x.tobytes())
