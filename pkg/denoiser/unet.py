"""Conditioned U-Net noise predictor.

Layout at width W (defaults to 64), for a 3 x 32 x 32 input:

    init    ResBlock 3 -> W                                 32 x 32
    down1   ResBlock W -> 2W, ResBlock 2W -> 2W, maxpool    16 x 16
    down2   ResBlock 2W -> 2W (x2), maxpool                  8 x 8
    up0     avgpool, GELU, convT(k=8, s=8), BN, ReLU         8 x 8
    up1     convT 4W -> W on [cemb1 * up0 + temb1, down2]   16 x 16, 2 ResBlocks
    up2     convT 3W -> W on [cemb2 * up1 + temb2, down1]   32 x 32, 2 ResBlocks
    out     conv 2W -> W on [up2, init], BN, ReLU, conv W -> 3

Time and context embeddings are Linear-GELU-Linear stacks.
"""

import numpy as np

from denoiser.layers import (
    GELU,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    GlobalAvgPool,
    Layer,
    Linear,
    MaxPool2d,
    ParameterSet,
    ReLU,
    Sequential,
    ShapeMismatchError,
)

CONTEXT_DIM = 29
IN_CHANNELS = 3
FRAME_SIZE = 32


class ResBlock(Layer):
    """conv-BN-GELU-conv-BN-GELU plus an identity or 1x1-conv skip."""

    def __init__(self, ps: ParameterSet, name: str, c_in: int, c_out: int):
        self.main = Sequential(
            Conv2d(ps, f"{name}.conv1", c_in, c_out, 3),
            BatchNorm2d(ps, f"{name}.bn1", c_out),
            GELU(),
            Conv2d(ps, f"{name}.conv2", c_out, c_out, 3),
            BatchNorm2d(ps, f"{name}.bn2", c_out),
            GELU(),
        )
        self.skip = Conv2d(ps, f"{name}.skip", c_in, c_out, 1) if c_in != c_out else None

    def forward(self, x, train=True):
        out = self.main.forward(x, train)
        return out + (self.skip.forward(x, train) if self.skip else x)

    def backward(self, dout):
        dx = self.main.backward(dout)
        return dx + (self.skip.backward(dout) if self.skip else dout)


def embedding(ps: ParameterSet, name: str, n_in: int, n_out: int) -> Sequential:
    return Sequential(Linear(ps, f"{name}.fc1", n_in, n_out), GELU(), Linear(ps, f"{name}.fc2", n_out, n_out))


class ConditionedUNet:
    """Noise predictor z(x_t, t/T, context).

    Args:
        width: base channel count W
        dtype: float32 for training, float64 for gradient checks
        seed: initialization seed
    """

    def __init__(self, width: int = 64, dtype=np.float32, seed: int = 0):
        self.width = width
        self.ps = ParameterSet(dtype=dtype, rng=np.random.default_rng(seed))
        ps, w = self.ps, width

        self.init = ResBlock(ps, "init", IN_CHANNELS, w)
        self.down1 = Sequential(ResBlock(ps, "down1.res1", w, 2 * w), ResBlock(ps, "down1.res2", 2 * w, 2 * w))
        self.pool1 = MaxPool2d()
        self.down2 = Sequential(ResBlock(ps, "down2.res1", 2 * w, 2 * w), ResBlock(ps, "down2.res2", 2 * w, 2 * w))
        self.pool2 = MaxPool2d()

        self.up0 = Sequential(
            GlobalAvgPool(),
            GELU(),
            ConvTranspose2d(ps, "up0.convt", 2 * w, 2 * w, FRAME_SIZE // 4),
            BatchNorm2d(ps, "up0.bn", 2 * w),
            ReLU(),
        )
        self.temb1 = embedding(ps, "temb1", 1, 2 * w)
        self.temb2 = embedding(ps, "temb2", 1, w)
        self.cemb1 = embedding(ps, "cemb1", CONTEXT_DIM, 2 * w)
        self.cemb2 = embedding(ps, "cemb2", CONTEXT_DIM, w)

        self.up1 = Sequential(
            ConvTranspose2d(ps, "up1.convt", 4 * w, w, 2),
            ResBlock(ps, "up1.res1", w, w),
            ResBlock(ps, "up1.res2", w, w),
        )
        self.up2 = Sequential(
            ConvTranspose2d(ps, "up2.convt", 3 * w, w, 2),
            ResBlock(ps, "up2.res1", w, w),
            ResBlock(ps, "up2.res2", w, w),
        )
        self.out = Sequential(
            Conv2d(ps, "out.conv1", 2 * w, w, 3),
            BatchNorm2d(ps, "out.bn", w),
            ReLU(),
            Conv2d(ps, "out.conv2", w, IN_CHANNELS, 3),
        )
        self._cache = None

    @property
    def dtype(self):
        return self.ps.dtype

    def _check_inputs(self, frame, t_norm, context):
        b = frame.shape[0]
        if frame.shape[1:] != (IN_CHANNELS, FRAME_SIZE, FRAME_SIZE):
            raise ShapeMismatchError(f"frame must be (B, 3, 32, 32), got {frame.shape}")
        if t_norm.shape != (b, 1):
            raise ShapeMismatchError(f"t_norm must be ({b}, 1), got {t_norm.shape}")
        if context.shape != (b, CONTEXT_DIM):
            raise ShapeMismatchError(f"context must be ({b}, {CONTEXT_DIM}), got {context.shape}")

    def forward(self, frame, t_norm, context, train: bool = False) -> np.ndarray:
        dt = self.dtype
        frame = np.asarray(frame, dtype=dt)
        t_norm = np.asarray(t_norm, dtype=dt)
        context = np.asarray(context, dtype=dt)
        self._check_inputs(frame, t_norm, context)
        w = self.width

        x_init = self.init.forward(frame, train)
        x_d1 = self.pool1.forward(self.down1.forward(x_init, train), train)
        x_d2 = self.pool2.forward(self.down2.forward(x_d1, train), train)
        x_u0 = self.up0.forward(x_d2, train)

        t1 = self.temb1.forward(t_norm, train)[:, :, None, None]
        t2 = self.temb2.forward(t_norm, train)[:, :, None, None]
        c1 = self.cemb1.forward(context, train)[:, :, None, None]
        c2 = self.cemb2.forward(context, train)[:, :, None, None]

        f1 = c1 * x_u0 + t1
        x_u1 = self.up1.forward(np.concatenate([f1, x_d2], axis=1), train)
        f2 = c2 * x_u1 + t2
        x_u2 = self.up2.forward(np.concatenate([f2, x_d1], axis=1), train)
        out = self.out.forward(np.concatenate([x_u2, x_init], axis=1), train)

        self._cache = (x_u0, x_u1, c1, c2, w)
        return out

    def backward(self, dout: np.ndarray) -> None:
        """Accumulate parameter gradients for the last forward call."""
        if self._cache is None:
            raise ShapeMismatchError("backward called before forward")
        x_u0, x_u1, c1, c2, w = self._cache
        dout = np.asarray(dout, dtype=self.dtype)

        d_cat_out = self.out.backward(dout)
        d_u2, d_init = d_cat_out[:, :w], d_cat_out[:, w:]

        d_cat2 = self.up2.backward(d_u2)
        d_f2, d_d1 = d_cat2[:, :w], d_cat2[:, w:]
        d_c2 = (d_f2 * x_u1).sum(axis=(2, 3))
        d_t2 = d_f2.sum(axis=(2, 3))
        d_u1 = d_f2 * c2

        d_cat1 = self.up1.backward(d_u1)
        d_f1, d_d2 = d_cat1[:, :2 * w], d_cat1[:, 2 * w:]
        d_c1 = (d_f1 * x_u0).sum(axis=(2, 3))
        d_t1 = d_f1.sum(axis=(2, 3))
        d_u0 = d_f1 * c1

        self.cemb2.backward(d_c2)
        self.cemb1.backward(d_c1)
        self.temb2.backward(d_t2)
        self.temb1.backward(d_t1)

        d_d2 = d_d2 + self.up0.backward(d_u0)
        d_d1 = d_d1 + self.down2.backward(self.pool2.backward(d_d2))
        d_init = d_init + self.down1.backward(self.pool1.backward(d_d1))
        self.init.backward(d_init)

    def parameter_count(self) -> int:
        return self.ps.count()
