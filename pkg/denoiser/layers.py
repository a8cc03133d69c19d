"""Minimal layer set with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into the shared ParameterSet.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf


class DenoiserError(Exception):
    """Base class for denoiser network errors."""
    pass


class ShapeMismatchError(DenoiserError):
    """Raised when an input or output tensor has an unexpected shape."""
    pass


class ParameterSet:
    """Named trainable tensors, their gradients and non-trainable buffers.

    Insertion order is the canonical parameter order used by the
    architecture descriptor and the weight file.
    """

    def __init__(self, dtype=np.float32, rng: np.random.Generator | None = None):
        self.dtype = np.dtype(dtype)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, shape: tuple, init: str, fan_in: int = 1) -> str:
        if name in self.params:
            raise DenoiserError(f"Duplicate parameter name '{name}'")
        if init == "kaiming_uniform":
            bound = np.sqrt(6.0 / fan_in)
            value = self.rng.uniform(-bound, bound, size=shape)
        elif init == "ones":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        self.params[name] = value.astype(self.dtype)
        self.grads[name] = np.zeros(shape, dtype=self.dtype)
        return name

    def add_buffer(self, name: str, value: np.ndarray) -> str:
        self.buffers[name] = np.asarray(value, dtype=self.dtype).copy()
        return name

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def count(self) -> int:
        return int(sum(p.size for p in self.params.values()))


class Layer:
    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """(B, C, H', W', k, k) view of k x k patches (stride 1)."""
    return sliding_window_view(x, (k, k), axis=(2, 3))


class Conv2d(Layer):
    """Stride-1 'same' convolution with an odd square kernel."""

    def __init__(self, ps: ParameterSet, name: str, c_in: int, c_out: int, kernel: int = 3):
        self.ps = ps
        self.kernel = kernel
        self.pad = kernel // 2
        self.w = ps.add(f"{name}.weight", (c_out, c_in, kernel, kernel), "kaiming_uniform",
                        fan_in=c_in * kernel * kernel)
        self.b = ps.add(f"{name}.bias", (c_out,), "zeros")
        self.cache = None

    def forward(self, x, train=True):
        weight = self.ps.params[self.w]
        if x.ndim != 4 or x.shape[1] != weight.shape[1]:
            raise ShapeMismatchError(f"Conv2d expects {weight.shape[1]} channels, got shape {x.shape}")
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = _windows(xp, self.kernel)
        out = np.einsum("bihwkl,oikl->bohw", win, weight, optimize=True)
        out += self.ps.params[self.b][None, :, None, None]
        self.cache = (x.shape, win)
        return out

    def backward(self, dout):
        x_shape, win = self.cache
        weight = self.ps.params[self.w]
        self.ps.grads[self.b] += dout.sum(axis=(0, 2, 3))
        self.ps.grads[self.w] += np.einsum("bihwkl,bohw->oikl", win, dout, optimize=True)
        # Full correlation of dout with the 180-degree rotated kernel.
        q = self.kernel - 1 - self.pad
        dp = np.pad(dout, ((0, 0), (0, 0), (q, q), (q, q))) if q else dout
        rot = weight[:, :, ::-1, ::-1]
        dx = np.einsum("bohwkl,oikl->bihw", _windows(dp, self.kernel), rot, optimize=True)
        return dx


class ConvTranspose2d(Layer):
    """Transposed convolution with kernel == stride (non-overlapping upsampling)."""

    def __init__(self, ps: ParameterSet, name: str, c_in: int, c_out: int, kernel: int):
        self.ps = ps
        self.kernel = kernel
        self.w = ps.add(f"{name}.weight", (c_in, c_out, kernel, kernel), "kaiming_uniform",
                        fan_in=c_in)
        self.b = ps.add(f"{name}.bias", (c_out,), "zeros")
        self.cache = None

    def forward(self, x, train=True):
        weight = self.ps.params[self.w]
        if x.ndim != 4 or x.shape[1] != weight.shape[0]:
            raise ShapeMismatchError(f"ConvTranspose2d expects {weight.shape[0]} channels, got shape {x.shape}")
        b, _, h, w = x.shape
        k = self.kernel
        out = np.einsum("bchw,cokl->bohkwl", x, weight, optimize=True)
        out = out.reshape(b, weight.shape[1], h * k, w * k)
        out += self.ps.params[self.b][None, :, None, None]
        self.cache = x
        return out

    def backward(self, dout):
        x = self.cache
        weight = self.ps.params[self.w]
        b, _, h, w = x.shape
        k = self.kernel
        d6 = dout.reshape(b, weight.shape[1], h, k, w, k)
        self.ps.grads[self.b] += dout.sum(axis=(0, 2, 3))
        self.ps.grads[self.w] += np.einsum("bchw,bohkwl->cokl", x, d6, optimize=True)
        return np.einsum("bohkwl,cokl->bchw", d6, weight, optimize=True)


class Linear(Layer):
    def __init__(self, ps: ParameterSet, name: str, n_in: int, n_out: int):
        self.ps = ps
        self.w = ps.add(f"{name}.weight", (n_out, n_in), "kaiming_uniform", fan_in=n_in)
        self.b = ps.add(f"{name}.bias", (n_out,), "zeros")
        self.cache = None

    def forward(self, x, train=True):
        weight = self.ps.params[self.w]
        if x.ndim != 2 or x.shape[1] != weight.shape[1]:
            raise ShapeMismatchError(f"Linear expects (B, {weight.shape[1]}), got {x.shape}")
        self.cache = x
        return x @ weight.T + self.ps.params[self.b]

    def backward(self, dout):
        x = self.cache
        self.ps.grads[self.w] += dout.T @ x
        self.ps.grads[self.b] += dout.sum(axis=0)
        return dout @ self.ps.params[self.w]


class BatchNorm2d(Layer):
    """Per-channel batch normalization.

    Running statistics use momentum 0.1; the running variance stores the
    biased batch variance.
    """

    def __init__(self, ps: ParameterSet, name: str, channels: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.ps = ps
        self.momentum = momentum
        self.eps = eps
        self.gamma = ps.add(f"{name}.gamma", (channels,), "ones")
        self.beta = ps.add(f"{name}.beta", (channels,), "zeros")
        self.mean = ps.add_buffer(f"{name}.running_mean", np.zeros(channels))
        self.var = ps.add_buffer(f"{name}.running_var", np.ones(channels))
        self.cache = None

    def forward(self, x, train=True):
        gamma = self.ps.params[self.gamma][None, :, None, None]
        beta = self.ps.params[self.beta][None, :, None, None]
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            self.ps.buffers[self.mean] = ((1 - m) * self.ps.buffers[self.mean] + m * mean).astype(self.ps.dtype)
            self.ps.buffers[self.var] = ((1 - m) * self.ps.buffers[self.var] + m * var).astype(self.ps.dtype)
        else:
            mean = self.ps.buffers[self.mean]
            var = self.ps.buffers[self.var]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self.cache = (x_hat, inv_std, train)
        return gamma * x_hat + beta

    def backward(self, dout):
        x_hat, inv_std, train = self.cache
        gamma = self.ps.params[self.gamma]
        self.ps.grads[self.gamma] += (dout * x_hat).sum(axis=(0, 2, 3))
        self.ps.grads[self.beta] += dout.sum(axis=(0, 2, 3))
        dx_hat = dout * gamma[None, :, None, None]
        scale = inv_std[None, :, None, None]
        if not train:
            return dx_hat * scale
        n = dout.shape[0] * dout.shape[2] * dout.shape[3]
        sum_d = dx_hat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dx = (dx_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
        return scale / n * (n * dx_hat - sum_d - x_hat * sum_dx)


class GELU(Layer):
    """Exact GELU, x * Phi(x)."""

    def __init__(self):
        self.cache = None

    def forward(self, x, train=True):
        cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
        self.cache = (x, cdf)
        return x * cdf

    def backward(self, dout):
        x, cdf = self.cache
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return dout * (cdf + x * pdf)


class ReLU(Layer):
    def __init__(self):
        self.cache = None

    def forward(self, x, train=True):
        self.cache = x > 0
        return np.where(self.cache, x, 0.0).astype(x.dtype)

    def backward(self, dout):
        return dout * self.cache


class MaxPool2d(Layer):
    """2 x 2 max pool; gradient routed to the first maximal entry."""

    def __init__(self):
        self.cache = None

    def forward(self, x, train=True):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError(f"MaxPool2d needs even spatial size, got {x.shape}")
        blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
        idx = blocks.argmax(axis=-1)
        self.cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (b, c, h, w), idx = self.cache
        blocks = np.zeros((b, c, h // 2, w // 2, 4), dtype=dout.dtype)
        np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
        return blocks.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


class GlobalAvgPool(Layer):
    def __init__(self):
        self.cache = None

    def forward(self, x, train=True):
        self.cache = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, dout):
        b, c, h, w = self.cache
        return np.broadcast_to(dout / (h * w), (b, c, h, w)).copy()


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean squared error over live entries and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"Prediction {pred.shape} vs target {target.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.broadcast_to(mask, pred.shape)
    live = max(int(mask.sum()), 1)
    diff = np.where(mask, pred - target, 0.0)
    loss = float(np.sum(diff * diff) / live)
    return loss, (2.0 / live * diff).astype(pred.dtype)
