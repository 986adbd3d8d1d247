"""Layers, finite-difference checks and a small training run.

Run: python demos/05_network_gradients.py  (about a minute)
"""
import numpy as np

from hoadoa.dataset import ArrayDataset, GenConfig, generate_dataset
from hoadoa.dcnn import TrainConfig, build_model, loss_and_grads, train
from hoadoa.nn import deconv2d, deconv2d_backward, deconv_params, gradient_check

rng = np.random.default_rng(0)

# A stride-2 transposed convolution doubles the spatial size.
layer = deconv_params(3, 2, (4, 4), (2, 2), (1, 1), rng=rng, dtype=np.float64)
x = rng.standard_normal((1, 3, 5, 6))
print("deconv:", x.shape, "->", deconv2d(layer, x).shape)

# Analytic gradients against central differences.
up = rng.standard_normal(deconv2d(layer, x).shape)
err = gradient_check(lambda: (float(np.sum(deconv2d(layer, x) * up)), deconv2d_backward(layer, x, up)[1]), layer.arrays)
print(f"deconv layer gradient error {err:.1e}")

model = build_model(seed=0, dtype=np.float64)
print("parameters:", model.n_params)
X = rng.standard_normal((2, 625)) * 0.04
Y = rng.uniform(0, 1, (2, 60, 120))
err = gradient_check(lambda: loss_and_grads(model, X, Y), model.arrays, n_coords=50, step=(1e-5, 1e-6, 1e-7))
print(f"whole-network gradient error {err:.1e}")

# Fit 40 single-source rooms. Soft labels put a floor under the BCE: their own entropy.
data = ArrayDataset.from_records(generate_dataset(GenConfig(count=40, sources=(1, 1), seed=9)))
_, hist = train(build_model(seed=0), data, TrainConfig(epochs=15, batch_size=8, val_fraction=0.0))
y = np.clip(data.labels.astype(np.float64), 1e-12, 1 - 1e-12)
floor = np.mean(-(y * np.log(y) + (1 - y) * np.log1p(-y)))
print(f"loss {hist.initial_loss:.5f} -> {hist.train_loss[-1]:.5f}  (entropy floor {floor:.5f})")
