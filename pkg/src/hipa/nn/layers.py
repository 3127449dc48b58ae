"""Parameterized building blocks: convolutions, gates, residual blocks.

Every layer registers its parameters under a dot-path prefix at
construction time and is a pure function of (parameters, input) afterwards.
Weights use fan-in scaled uniform init, drawn in construction order from a
single stream so the full model init is reproducible.
"""

from __future__ import annotations

import math

from ..autodiff import ops
from ..errors import InvalidHyperparam, UnsupportedScale
from ..rng import Xoshiro256
from .params import ParamStore


class Conv2d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 kernel: int, rng: Xoshiro256, stride: int = 1, padding: int = 0,
                 dilation: int = 1):
        bound = math.sqrt(1.0 / (c_in * kernel * kernel))
        self.weight = store.register(
            f"{name}.weight", rng.uniform(-bound, bound, (c_out, c_in, kernel, kernel))
        )
        self.bias = store.register(f"{name}.bias", rng.uniform(-bound, bound, (c_out,)))
        self.stride = stride
        self.padding = padding
        self.dilation = dilation

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          padding=self.padding, dilation=self.dilation)


class DepthwiseConv2d:
    """Per-channel spatial convolution (one kernel per channel)."""

    def __init__(self, store: ParamStore, name: str, channels: int, kernel: int,
                 rng: Xoshiro256, padding: int = 0):
        bound = math.sqrt(1.0 / (kernel * kernel))
        self.weight = store.register(
            f"{name}.weight", rng.uniform(-bound, bound, (channels, kernel, kernel))
        )
        self.bias = store.register(f"{name}.bias", rng.uniform(-bound, bound, (channels,)))
        self.padding = padding

    def __call__(self, x):
        return ops.depthwise_conv2d(x, self.weight, self.bias, padding=self.padding)


class Linear:
    """Affine map on the last axis: y = x @ W + b, W stored (d_in, d_out)."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int,
                 rng: Xoshiro256):
        bound = math.sqrt(1.0 / d_in)
        self.weight = store.register(f"{name}.weight", rng.uniform(-bound, bound, (d_in, d_out)))
        self.bias = store.register(f"{name}.bias", rng.uniform(-bound, bound, (d_out,)))

    def __call__(self, x):
        return ops.add(ops.matmul(x, self.weight), self.bias)


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int, eps: float = 1e-5):
        import numpy as np

        self.gamma = store.register(f"{name}.gamma", np.ones(dim, dtype=np.float32))
        self.beta = store.register(f"{name}.beta", np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class ChannelGate:
    """Squeeze-excite gate: pooled stats -> bottleneck -> sigmoid weights."""

    def __init__(self, store: ParamStore, name: str, channels: int, squeeze: int,
                 rng: Xoshiro256):
        if squeeze < 1:
            raise InvalidHyperparam(f"gate squeeze width must be >= 1, got {squeeze}")
        self.down = Conv2d(store, f"{name}.down", channels, squeeze, 1, rng)
        self.up = Conv2d(store, f"{name}.up", squeeze, channels, 1, rng)

    def __call__(self, x):
        s = ops.global_avg_pool(x)
        s = ops.relu(self.down(s))
        gate = ops.sigmoid(self.up(s))
        return ops.mul(x, gate)


class ResidualBlock:
    """x + conv3x3(relu(conv3x3(x))), channel and size preserving."""

    def __init__(self, store: ParamStore, name: str, channels: int, rng: Xoshiro256):
        self.conv1 = Conv2d(store, f"{name}.conv1", channels, channels, 3, rng, padding=1)
        self.conv2 = Conv2d(store, f"{name}.conv2", channels, channels, 3, rng, padding=1)

    def __call__(self, x):
        return ops.add(x, self.conv2(ops.relu(self.conv1(x))))


# (kernel, dilation, padding) per receptive-field branch: RF 1, 3, 5
BRANCH_GEOMETRY = {1: (1, 1, 0), 2: (3, 1, 1), 3: (3, 2, 2)}

# squeeze width of the branch gates
BRANCH_GATE_WIDTH = 4


class DilatedChannelAttention:
    """One receptive-field branch: dilated spatial conv, then a channel gate.

    Branch 1/2/3 covers receptive field 1/3/5; branch 3 reaches RF 5 with a
    3x3 kernel at dilation 2 instead of a dense 5x5.
    """

    def __init__(self, store: ParamStore, name: str, channels: int, branch: int,
                 rng: Xoshiro256):
        if branch not in BRANCH_GEOMETRY:
            raise InvalidHyperparam(f"branch must be 1, 2 or 3, got {branch}")
        kernel, dilation, padding = BRANCH_GEOMETRY[branch]
        self.conv = Conv2d(store, f"{name}.conv", channels, channels, kernel, rng,
                           padding=padding, dilation=dilation)
        self.gate = ChannelGate(store, f"{name}.gate", channels, BRANCH_GATE_WIDTH, rng)

    def __call__(self, x):
        return self.gate(self.conv(x))


class Upsampler:
    """Sub-pixel upsampling: channel-expanding conv followed by pixel shuffle."""

    def __init__(self, store: ParamStore, name: str, channels: int, scale: int,
                 rng: Xoshiro256):
        if scale not in (2, 3, 4):
            raise UnsupportedScale(f"upsampling scale must be 2, 3 or 4, got {scale}")
        self.scale = scale
        self.convs = []
        if scale == 3:
            self.convs.append(Conv2d(store, f"{name}.conv0", channels, 9 * channels, 3, rng, padding=1))
            self.steps = [3]
        else:
            for i in range(scale // 2):
                self.convs.append(Conv2d(store, f"{name}.conv{i}", channels, 4 * channels, 3, rng, padding=1))
            self.steps = [2] * (scale // 2)

    def __call__(self, x):
        for conv, r in zip(self.convs, self.steps):
            x = ops.pixel_shuffle(conv(x), r)
        return x
