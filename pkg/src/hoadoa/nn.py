"""Explicit forward/backward kernels: dense, transposed convolution, BCE, Adam.

There is no autograd graph. Every layer is a pair of functions operating on
a :class:`LayerParams` record, and backward passes return exact gradients.
Arithmetic follows the dtype of the parameters (float32 for training,
float64 for gradient checks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class LayerParams:
    """Weights plus geometry of one layer.

    Dense weights are ``(out, in)``. Transposed-convolution weights are
    ``(in_channels, out_channels, kh, kw)`` as in the gradient-of-convolution
    convention.
    """

    kind: str
    weight: np.ndarray
    bias: np.ndarray
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    output_padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind == "dense":
            if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
                raise DomainError("dense weight must be (out, in) with bias (out,)")
        elif self.kind == "deconv":
            if self.weight.ndim != 4 or self.bias.shape != (self.weight.shape[1],):
                raise DomainError("deconv weight must be (cin, cout, kh, kw) with bias (cout,)")
            for s, p, op in zip(self.stride, self.padding, self.output_padding):
                if s < 1 or p < 0 or not 0 <= op < s:
                    raise DomainError("inconsistent deconvolution geometry")
        else:
            raise DomainError(f"unknown layer kind {self.kind!r}")

    @property
    def arrays(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.weight.shape[2:]
        (sh, sw), (ph, pw), (oh, ow) = self.stride, self.padding, self.output_padding
        return (h - 1) * sh - 2 * ph + kh + oh, (w - 1) * sw - 2 * pw + kw + ow


def dense_params(n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32) -> LayerParams:
    """He-scaled normal weights, zero bias."""
    w = rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)
    return LayerParams("dense", w.astype(dtype), np.zeros(n_out, dtype))


def deconv_params(cin, cout, kernel, stride, padding, output_padding=(0, 0), *, rng, dtype=np.float32) -> LayerParams:
    kh, kw = kernel
    # fan-in of a transposed conv output pixel is cin * kh * kw / (sh * sw)
    fan_in = cin * kh * kw / (stride[0] * stride[1])
    w = rng.standard_normal((cin, cout, kh, kw)) * np.sqrt(2.0 / fan_in)
    return LayerParams(
        "deconv", w.astype(dtype), np.zeros(cout, dtype), tuple(stride), tuple(padding), tuple(output_padding)
    )


def dense(params: LayerParams, x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != params.weight.shape[1]:
        raise DomainError(f"dense expects {params.weight.shape[1]} features, got {x.shape[-1]}")
    return x @ params.weight.T + params.bias


def dense_backward(params: LayerParams, x: np.ndarray, grad_out: np.ndarray):
    """Returns ``(grad_in, [grad_weight, grad_bias])`` for batched input ``(B, in)``."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    return grad_out @ params.weight, [g2.T @ x2, g2.sum(axis=0)]


def _deconv_geometry(params: LayerParams, x: np.ndarray):
    if x.ndim != 4 or x.shape[1] != params.weight.shape[0]:
        raise DomainError(f"deconv expects (B, {params.weight.shape[0]}, H, W) input, got {x.shape}")
    B, cin, H, W = x.shape
    _, cout, kh, kw = params.weight.shape
    (sh, sw), (ph, pw), (oh, ow) = params.stride, params.padding, params.output_padding
    Hp, Wp = (H - 1) * sh + kh + oh, (W - 1) * sw + kw + ow
    Ho, Wo = Hp - 2 * ph, Wp - 2 * pw
    if Ho <= 0 or Wo <= 0:
        raise DomainError("deconv output would be empty")
    return B, cin, H, W, cout, kh, kw, sh, sw, ph, pw, Hp, Wp, Ho, Wo


def deconv2d(params: LayerParams, x: np.ndarray) -> np.ndarray:
    """Transposed 2-D convolution of ``(B, cin, H, W)`` input.

    Output size per axis is ``(H - 1) * s - 2 * p + k + output_padding``.
    Each input pixel scatters ``x * K`` into a ``k x k`` window; the
    scatter is done as one GEMM followed by ``kh * kw`` strided adds.
    """
    B, cin, H, W, cout, kh, kw, sh, sw, ph, pw, Hp, Wp, Ho, Wo = _deconv_geometry(params, x)
    xm = x.transpose(1, 0, 2, 3).reshape(cin, B * H * W)
    cols = (params.weight.reshape(cin, cout * kh * kw).T @ xm).reshape(cout, kh, kw, B, H, W)
    full = np.zeros((cout, B, Hp, Wp), dtype=cols.dtype)
    for a in range(kh):
        for b in range(kw):
            full[:, :, a : a + (H - 1) * sh + 1 : sh, b : b + (W - 1) * sw + 1 : sw] += cols[:, a, b]
    out = full[:, :, ph : ph + Ho, pw : pw + Wo] + params.bias[:, None, None, None]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def deconv2d_backward(params: LayerParams, x: np.ndarray, grad_out: np.ndarray):
    """Returns ``(grad_in, [grad_weight, grad_bias])``."""
    B, cin, H, W, cout, kh, kw, sh, sw, ph, pw, Hp, Wp, Ho, Wo = _deconv_geometry(params, x)
    if grad_out.shape != (B, cout, Ho, Wo):
        raise DomainError(f"grad_out shape {grad_out.shape} != {(B, cout, Ho, Wo)}")
    full = np.zeros((cout, B, Hp, Wp), dtype=grad_out.dtype)
    full[:, :, ph : ph + Ho, pw : pw + Wo] = grad_out.transpose(1, 0, 2, 3)
    gcols = np.empty((cout, kh, kw, B, H, W), dtype=grad_out.dtype)
    for a in range(kh):
        for b in range(kw):
            gcols[:, a, b] = full[:, :, a : a + (H - 1) * sh + 1 : sh, b : b + (W - 1) * sw + 1 : sw]
    gcols = gcols.reshape(cout * kh * kw, B * H * W)
    xm = x.transpose(1, 0, 2, 3).reshape(cin, B * H * W)
    wm = params.weight.reshape(cin, cout * kh * kw)
    grad_in = (wm @ gcols).reshape(cin, B, H, W).transpose(1, 0, 2, 3)
    grad_w = (xm @ gcols.T).reshape(params.weight.shape)
    return np.ascontiguousarray(grad_in), [grad_w, grad_out.sum(axis=(0, 2, 3))]


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_bce(logits: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy of ``sigmoid(logits)`` against soft targets.

    Uses ``max(z, 0) - z * t + log1p(exp(-|z|))`` per cell. Returns
    ``(loss, grad)`` with ``grad = (sigmoid(z) - t) / n_cells``.
    """
    z = np.asarray(logits)
    t = np.asarray(targets, dtype=z.dtype)
    if z.shape != t.shape:
        raise DomainError(f"logits {z.shape} and targets {t.shape} differ in shape")
    if t.size and (t.min() < 0 or t.max() > 1 or not np.all(np.isfinite(t))):
        raise DomainError("targets must lie in [0, 1]")
    per_cell = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    return float(per_cell.sum(dtype=np.float64) / n), (sigmoid(z) - t) / z.dtype.type(n)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], **hyper) -> "AdamState":
        return cls(**hyper, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update, applied in place to ``params``.

    A non-zero ``state.weight_decay`` shrinks every array of two or more
    dimensions (weights, not biases) by ``lr * weight_decay`` per step,
    decoupled from the gradient moments.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise DomainError("parameter, gradient and moment lists differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DomainError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay and p.ndim > 1:
            p *= 1.0 - state.lr * state.weight_decay
        p -= (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
    return params


def gradient_check(loss_and_grads, params: list[np.ndarray], n_coords: int = 200, step=1e-6, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads()`` evaluates the loss at the current contents of
    ``params`` and returns ``(loss, grads)``. Coordinates are sampled at
    random across all parameter arrays; each is perturbed in place and
    restored. Relative error is ``|a - n| / max(|a|, |n|, 1e-7)``.

    ``step`` may be a sequence of step sizes, in which case a coordinate's
    error is its best agreement over the steps. A ReLU kink inside the
    stencil spoils large steps and rounding spoils small ones, but a wrong
    analytic gradient disagrees at every step.
    """
    steps = np.atleast_1d(np.asarray(step, dtype=float))
    _, grads = loss_and_grads()
    grads = [np.array(g, dtype=np.float64, copy=True) for g in grads]
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(int(flat - offsets[k]), params[k].shape)
        orig = params[k][idx]
        ana = grads[k][idx]
        best = np.inf
        for h in steps:
            params[k][idx] = orig + h
            lp, _ = loss_and_grads()
            params[k][idx] = orig - h
            lm, _ = loss_and_grads()
            params[k][idx] = orig
            num = (lp - lm) / (2 * h)
            best = min(best, abs(ana - num) / max(abs(ana), abs(num), 1e-7))
        worst = max(worst, best)
    return worst
