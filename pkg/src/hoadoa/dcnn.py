"""Fully connected encoder plus transposed-convolution decoder for SPS maps.

The network maps a flattened, trace-normalised HOA covariance to a 60x120
grid of per-direction source probabilities::

    625 -> FC 256 -> FC 256 -> FC 512 -> FC 7200 -> reshape (16, 15, 30)
        -> deconv 16->8 (k4 s2 p1) -> deconv 8->4 (k4 s2 p1)
        -> deconv 4->1 (k3 s1 p1) -> sigmoid

Every hidden layer is followed by ReLU.
"""

from __future__ import annotations

import copy
import math
import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, GeometryError, ModelFormatError, NumericalError
from .metrics import compute_metrics, match_doas
from .nn import (
    AdamState,
    LayerParams,
    adam_step,
    deconv2d,
    deconv2d_backward,
    deconv_params,
    dense,
    dense_backward,
    dense_params,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_bce,
)
from .sps import SpsGrid, peak_angles

log = logging.getLogger(__name__)

MODEL_MAGIC = "HOADOA-DCNN"
MODEL_VERSION = 1
OUTPUT_INIT_GAIN = 0.1


@dataclass(frozen=True)
class DeconvSpec:
    cin: int
    cout: int
    kernel: int
    stride: int
    padding: int
    output_padding: int = 0

    def out_size(self, n: int) -> int:
        return (n - 1) * self.stride - 2 * self.padding + self.kernel + self.output_padding


@dataclass(frozen=True)
class ModelConfig:
    order: int = 4
    fc_widths: tuple[int, ...] = (625, 256, 256, 512, 7200)
    reshape: tuple[int, int, int] = (16, 15, 30)
    deconvs: tuple[DeconvSpec, ...] = (
        DeconvSpec(16, 8, 4, 2, 1),
        DeconvSpec(8, 4, 4, 2, 1),
        DeconvSpec(4, 1, 3, 1, 1),
    )
    output_shape: tuple[int, int] = (60, 120)
    activation: str = "relu"
    input_scale: float | None = None
    output_bias: float = -5.0  # sigmoid(-5) ~ 0.007, under the mean label value

    def __post_init__(self):
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        object.__setattr__(self, "reshape", tuple(int(r) for r in self.reshape))
        object.__setattr__(self, "deconvs", tuple(d if isinstance(d, DeconvSpec) else DeconvSpec(*d) for d in self.deconvs))
        if self.input_scale is None:
            object.__setattr__(self, "input_scale", float((self.order + 1) ** 2))
        self.validate()

    @property
    def n_features(self) -> int:
        return (self.order + 1) ** 4

    def validate(self) -> None:
        if self.activation != "relu":
            raise ConfigError(f"unsupported hidden activation {self.activation!r}")
        if len(self.fc_widths) < 2:
            raise ConfigError("need at least one dense layer")
        if self.fc_widths[0] != self.n_features:
            raise ConfigError(f"first dense width {self.fc_widths[0]} != (N+1)^4 = {self.n_features}")
        c, h, w = self.reshape
        if self.fc_widths[-1] != c * h * w:
            raise ConfigError(f"last dense width {self.fc_widths[-1]} != {c}*{h}*{w} = {c * h * w}")
        for d in self.deconvs:
            if d.cin != c:
                raise ConfigError(f"deconv expects {d.cin} channels, previous layer gives {c}")
            c, h, w = d.cout, d.out_size(h), d.out_size(w)
        if c != 1 or (h, w) != tuple(self.output_shape):
            raise ConfigError(f"deconv stack ends at {(c, h, w)}, expected (1, {self.output_shape[0]}, {self.output_shape[1]})")


@dataclass
class Model:
    config: ModelConfig
    layers: list[LayerParams]
    seed: int | None = None

    @property
    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer.arrays]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays)

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def astype(self, dtype) -> "Model":
        m = copy.deepcopy(self)
        for layer in m.layers:
            layer.weight = layer.weight.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
        return m


def build_model(config: ModelConfig | None = None, seed: int = 0, dtype=np.float32) -> Model:
    """He-initialised model; identical parameters for identical seeds.

    The output layer is scaled down by ``OUTPUT_INIT_GAIN`` so the initial
    logits sit near ``config.output_bias`` instead of carrying random
    structure that the first epochs would have to unlearn.
    """
    config = config or ModelConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    layers = [dense_params(a, b, rng, dtype) for a, b in zip(config.fc_widths[:-1], config.fc_widths[1:])]
    for d in config.deconvs:
        layers.append(
            deconv_params(d.cin, d.cout, (d.kernel,) * 2, (d.stride,) * 2, (d.padding,) * 2, (d.output_padding,) * 2, rng=rng, dtype=dtype)
        )
    layers[-1].weight *= OUTPUT_INIT_GAIN
    layers[-1].bias[:] = config.output_bias
    return Model(config, layers, seed)


def forward_batch(model: Model, X: np.ndarray):
    """Logits ``(B, 60, 120)`` plus the cache needed by :func:`backward_batch`."""
    cfg = model.config
    X = np.asarray(X, dtype=model.dtype)
    if X.ndim != 2 or X.shape[1] != cfg.n_features:
        raise DomainError(f"expected features of length {cfg.n_features}, got shape {X.shape}")
    n_dense = len(cfg.fc_widths) - 1
    h = X * model.dtype.type(cfg.input_scale)
    cache = []
    for k, layer in enumerate(model.layers):
        if k == n_dense:
            h = h.reshape((len(X),) + cfg.reshape)
        z = dense(layer, h) if layer.kind == "dense" else deconv2d(layer, h)
        cache.append((h, z))
        h = relu(z) if k < len(model.layers) - 1 else z
    return h.reshape((len(X),) + tuple(cfg.output_shape)), cache


def backward_batch(model: Model, cache, grad_logits: np.ndarray) -> list[np.ndarray]:
    """Gradients for ``model.arrays`` given d(loss)/d(logits)."""
    n_dense = len(model.config.fc_widths) - 1
    g = grad_logits.reshape(cache[-1][1].shape)
    grads: list[list[np.ndarray]] = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        h, z = cache[k]
        if k < len(model.layers) - 1:
            g = relu_backward(z, g)
        if layer.kind == "dense":
            g, grads[k] = dense_backward(layer, h, g)
        else:
            g, grads[k] = deconv2d_backward(layer, h, g)
        if k == n_dense:
            g = g.reshape(len(g), -1)
    return [a for pair in grads for a in pair]


def loss_and_grads(model: Model, X: np.ndarray, Y: np.ndarray):
    logits, cache = forward_batch(model, X)
    loss, g = sigmoid_bce(logits, np.asarray(Y, dtype=logits.dtype).reshape(logits.shape))
    return loss, backward_batch(model, cache, g)


def predict(model: Model, X: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Sigmoid outputs ``(n, 60, 120)`` for a stack of features."""
    X = np.atleast_2d(X)
    out = [sigmoid(forward_batch(model, X[i : i + batch_size])[0]) for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,) + tuple(model.config.output_shape), model.dtype)


def model_forward(model: Model, feature) -> SpsGrid:
    """Network SPS for one feature vector."""
    f = np.asarray(feature)
    if f.ndim != 1 or f.size != model.config.n_features:
        raise DomainError(f"expected a feature of length {model.config.n_features}, got shape {f.shape}")
    return SpsGrid(predict(model, f[None])[0].astype(np.float64), "network-output")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    lr_schedule: str = "cosine"
    weight_decay: float = 0.05
    seed: int = 0
    val_fraction: float = 0.1
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    threshold: float = 0.5
    select_by: str = "f1"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.select_by not in ("f1", "loss"):
            raise ConfigError(f"unknown select_by {self.select_by!r} (f1 or loss)")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay non-negative")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for ``epoch``; cosine decays to zero at the end."""
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.lr
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * epoch / self.epochs))


@dataclass
class TrainHistory:
    initial_loss: float = float("nan")
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_recall: list[float] = field(default_factory=list)
    val_precision: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _mean_loss(model: Model, data, idx, batch_size: int) -> float:
    total = 0.0
    for s in range(0, len(idx), batch_size):
        b = idx[s : s + batch_size]
        logits, _ = forward_batch(model, data.features[b])
        total += sigmoid_bce(logits, data.labels[b])[0] * len(b)
    return total / len(idx)


def _val_scores(model: Model, data, idx, threshold: float):
    probs = predict(model, data.features[idx])
    report = compute_metrics(match_doas(peak_angles(p, threshold), data.truths[i]) for p, i in zip(probs, idx))
    nan = float("nan")
    return report.recall if report.recall is not None else nan, report.precision if report.precision is not None else nan


def _selection_key(select_by: str, val_loss: float, recall: float, precision: float) -> tuple:
    # larger is better; F1 ties (including the undefined case) fall back to loss
    if select_by == "loss":
        return (-val_loss,)
    f1 = 2 * recall * precision / (recall + precision) if recall + precision > 0 else 0.0
    return (f1 if np.isfinite(f1) else 0.0, -val_loss)


def train(model: Model, data, cfg: TrainConfig | None = None, progress=None):
    """Mini-batch Adam on sigmoid cross-entropy.

    ``data`` is an :class:`~hoadoa.dataset.ArrayDataset`. A seeded
    permutation holds out ``val_fraction`` of the records; the returned
    model carries the parameters of the best validation epoch. With
    ``select_by="f1"`` that is the highest F1 of recall and precision under
    the 25-degree rule (ties broken by loss), since a lower loss does not
    imply more peaks above the detection threshold. Without a validation
    split the last epoch is returned.
    """
    cfg = cfg or TrainConfig()
    n = len(data)
    if n == 0:
        raise DomainError("cannot train on an empty dataset")
    if data.features.shape[1] != model.config.n_features:
        raise GeometryError(f"dataset features have length {data.features.shape[1]}, model expects {model.config.n_features}")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n)) if n > 1 else 0
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    adam = AdamState.for_params(model.arrays, lr=cfg.lr, weight_decay=cfg.weight_decay)
    hist = TrainHistory(initial_loss=_mean_loss(model, data, tr_idx, cfg.batch_size))
    best, best_key = None, None
    for epoch in range(cfg.epochs):
        adam.lr = cfg.lr_at(epoch)
        order = rng.permutation(tr_idx)
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            b = np.sort(order[s : s + cfg.batch_size])
            loss, grads = loss_and_grads(model, data.features[b], data.labels[b])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch starting {s}")
            adam_step(adam, model.arrays, grads)
            total += loss * len(b)
        hist.train_loss.append(total / len(order))
        if n_val:
            vl = _mean_loss(model, data, val_idx, cfg.batch_size)
            rec, prec = _val_scores(model, data, val_idx, cfg.threshold)
        else:
            vl, rec, prec = hist.train_loss[-1], float("nan"), float("nan")
        hist.val_loss.append(vl)
        hist.val_recall.append(rec)
        hist.val_precision.append(prec)
        key = _selection_key(cfg.select_by, vl, rec, prec)
        if best_key is None or key > best_key or not n_val:
            best_key, best, hist.best_epoch = key, copy.deepcopy(model.layers), epoch
        log.info("epoch %d train %.5f val %.5f recall %.3f precision %.3f", epoch, hist.train_loss[-1], vl, rec, prec)
        if progress is not None:
            progress(epoch, hist)
        if cfg.checkpoint_every and cfg.checkpoint_path and (epoch + 1) % cfg.checkpoint_every == 0:
            save_model(model, cfg.checkpoint_path)
    if best is not None:
        model.layers = best
    return model, hist


# -- model files -------------------------------------------------------------

_REQUIRED_KEYS = ("version", "order", "fc_widths", "reshape", "deconvs", "output_shape", "activation", "input_scale", "n_params", "crc32")


def _header(model: Model, payload: bytes) -> str:
    cfg = model.config
    items = {
        "version": MODEL_VERSION,
        "order": cfg.order,
        "fc_widths": ",".join(map(str, cfg.fc_widths)),
        "reshape": ",".join(map(str, cfg.reshape)),
        "deconvs": ";".join(f"{d.cin}:{d.cout}:{d.kernel}:{d.stride}:{d.padding}:{d.output_padding}" for d in cfg.deconvs),
        "output_shape": ",".join(map(str, cfg.output_shape)),
        "activation": cfg.activation,
        "input_scale": repr(float(cfg.input_scale)),
        "output_bias": repr(float(cfg.output_bias)),
        "seed": "" if model.seed is None else model.seed,
        "n_params": model.n_params,
        "crc32": f"{zlib.crc32(payload):08x}",
        "created_by": f"hoadoa {__version__}",
    }
    return MODEL_MAGIC + "\n" + "".join(f"{k}={v}\n" for k, v in items.items()) + "end_header\n"


def save_model(model: Model, path) -> None:
    """Text header followed by little-endian float32 parameter blocks."""
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in model.arrays)
    with open(path, "wb") as fh:
        fh.write(_header(model, payload).encode("ascii"))
        fh.write(payload)


def _parse_header(raw: bytes) -> tuple[dict, int]:
    first = raw.find(b"\n")
    if first < 0 or raw[:first] != MODEL_MAGIC.encode():
        raise ModelFormatError("bad magic: not a DCNN model file")
    end = raw.find(b"\nend_header\n")
    if end < 0:
        raise ModelFormatError("truncated header (no end_header marker)")
    try:
        text = raw[first + 1 : end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ModelFormatError("header is not ASCII") from exc
    meta = {}
    for line in text.split("\n"):
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFormatError(f"malformed header line {line!r}")
        meta[key] = value
    missing = [k for k in _REQUIRED_KEYS if k not in meta]
    if missing:
        raise ModelFormatError(f"header lacks keys {missing}")
    return meta, end + len(b"\nend_header\n")


def _config_from_header(meta: dict) -> ModelConfig:
    try:
        deconvs = tuple(DeconvSpec(*map(int, d.split(":"))) for d in meta["deconvs"].split(";"))
        return ModelConfig(
            order=int(meta["order"]),
            fc_widths=tuple(int(w) for w in meta["fc_widths"].split(",")),
            reshape=tuple(int(r) for r in meta["reshape"].split(",")),
            deconvs=deconvs,
            output_shape=tuple(int(s) for s in meta["output_shape"].split(",")),
            activation=meta["activation"],
            input_scale=float(meta["input_scale"]),
            output_bias=float(meta.get("output_bias", 0.0)),
        )
    except ConfigError as exc:
        raise GeometryError(f"inconsistent model geometry: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"unparseable geometry in header: {exc}") from exc


def load_model(path, expected_order: int | None = None) -> Model:
    """Read a model file, checking version, geometry, size and checksum."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    meta, offset = _parse_header(raw)
    try:
        version = int(meta["version"])
        n_params = int(meta["n_params"])
        crc = int(meta["crc32"], 16)
        seed = int(meta["seed"]) if meta.get("seed") else None
    except ValueError as exc:
        raise ModelFormatError(f"bad numeric header field: {exc}") from exc
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version} (expected {MODEL_VERSION})")
    cfg = _config_from_header(meta)
    if expected_order is not None and cfg.order != expected_order:
        raise GeometryError(f"model HOA order {cfg.order} (features {cfg.n_features}), expected order {expected_order} (features {(expected_order + 1) ** 4})")
    model = build_model(cfg, seed=0)
    if model.n_params != n_params:
        raise GeometryError(f"header declares {n_params} parameters, geometry implies {model.n_params}")
    payload = raw[offset:]
    if len(payload) != 4 * n_params:
        raise ModelFormatError(f"payload holds {len(payload)} bytes, expected {4 * n_params}")
    if zlib.crc32(payload) != crc:
        raise ModelFormatError("checksum mismatch: parameter payload is corrupt")
    values = np.frombuffer(payload, "<f4")
    if not np.all(np.isfinite(values)):
        raise ModelFormatError("non-finite parameters")
    pos = 0
    for a in model.arrays:
        a[...] = values[pos : pos + a.size].reshape(a.shape)
        pos += a.size
    model.seed = seed
    return model
