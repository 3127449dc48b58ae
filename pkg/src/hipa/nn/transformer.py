"""Patch tokenization, position encodings, and the transformer encoder.

Tokens are pure rearrangements of PxP feature patches (no learned
projection): token dim D = P*P*C, grid order row-major. Three position
encoding flavors are supported:

  * ``ape``  - encoding computed from the tokens themselves: reshape to the
    2-D grid, 3x3 conv, channel-attention gate. Content- and
    position-dependent, works at any grid size.
  * ``cpe``  - depthwise 3x3 conv on the grid, no gate.
  * ``pe``   - learned per-position table at a fixed nominal grid,
    bilinearly resized when the runtime grid differs.
  * ``none`` - no positional signal (the encoder is then permutation
    equivariant over tokens).
"""

from __future__ import annotations

import math

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import InvalidHyperparam, NotDivisible
from ..rng import Xoshiro256
from .layers import ChannelGate, Conv2d, DepthwiseConv2d, LayerNorm, Linear
from .params import ParamStore

MLP_RATIO = 2
APE_GATE_REDUCTION = 4


def patch_embed(f, patch: int):
    """(n, c, h, w) -> (n, N, D) tokens; D = patch*patch*c, N = h*w/patch^2."""
    n, c, h, w = f.shape
    if h % patch or w % patch:
        raise NotDivisible(f"patch size {patch} does not divide extents {h}x{w}")
    gh, gw = h // patch, w // patch
    t = ops.reshape(f, (n, c, gh, patch, gw, patch))
    t = ops.permute(t, (0, 2, 4, 3, 5, 1))  # (n, gh, gw, P, P, c)
    return ops.reshape(t, (n, gh * gw, patch * patch * c))


def patch_fold(tokens, patch: int, channels: int, h: int, w: int):
    """Exact inverse of patch_embed."""
    n, num, dim = tokens.shape
    gh, gw = h // patch, w // patch
    if num * patch * patch != h * w or dim != patch * patch * channels:
        raise NotDivisible(
            f"cannot fold {num}x{dim} tokens into ({channels},{h},{w}) at patch {patch}"
        )
    t = ops.reshape(tokens, (n, gh, gw, patch, patch, channels))
    t = ops.permute(t, (0, 5, 1, 3, 2, 4))  # (n, c, gh, P, gw, P)
    return ops.reshape(t, (n, channels, h, w))


def _tokens_to_grid(tokens, grid):
    n, num, dim = tokens.shape
    gh, gw = grid
    t = ops.reshape(tokens, (n, gh, gw, dim))
    return ops.permute(t, (0, 3, 1, 2))  # (n, D, gh, gw)


def _grid_to_tokens(grid_map):
    n, dim, gh, gw = grid_map.shape
    t = ops.permute(grid_map, (0, 2, 3, 1))
    return ops.reshape(t, (n, gh * gw, dim))


class AttentionPositionEncoding:
    """Token-derived positional signal: grid conv then channel gate."""

    def __init__(self, store: ParamStore, name: str, dim: int, rng: Xoshiro256):
        self.conv = Conv2d(store, f"{name}.conv", dim, dim, 3, rng, padding=1)
        squeeze = max(1, dim // APE_GATE_REDUCTION)
        self.gate = ChannelGate(store, f"{name}.gate", dim, squeeze, rng)

    def __call__(self, tokens, grid):
        m = _tokens_to_grid(tokens, grid)
        m = self.gate(self.conv(m))
        return _grid_to_tokens(m)


class ConvPositionEncoding:
    """Depthwise grid conv, no gate."""

    def __init__(self, store: ParamStore, name: str, dim: int, rng: Xoshiro256):
        self.conv = DepthwiseConv2d(store, f"{name}.conv", dim, 3, rng, padding=1)

    def __call__(self, tokens, grid):
        return _grid_to_tokens(self.conv(_tokens_to_grid(tokens, grid)))


def _bilinear_resize_grid(table: np.ndarray, out_gh: int, out_gw: int) -> np.ndarray:
    """Resize an (gh, gw, d) table; half-pixel centers, edge clamped."""
    gh, gw, _ = table.shape

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(src).astype(int)
        frac = src - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac

    y0, y1, fy = axis_weights(gh, out_gh)
    x0, x1, fx = axis_weights(gw, out_gw)
    rows = table[y0] * (1 - fy)[:, None, None] + table[y1] * fy[:, None, None]
    out = (rows[:, x0] * (1 - fx)[None, :, None]
           + rows[:, x1] * fx[None, :, None])
    return out.astype(table.dtype)


class LearnedPositionEncoding:
    """Fixed-size learned table; resized (outside the tape) on grid mismatch."""

    def __init__(self, store: ParamStore, name: str, dim: int, nominal_grid: tuple,
                 rng: Xoshiro256):
        self.nominal_grid = tuple(nominal_grid)
        count = nominal_grid[0] * nominal_grid[1]
        self.table = store.register(
            f"{name}.table", rng.uniform(-0.02, 0.02, (count, dim))
        )

    def __call__(self, tokens, grid):
        if tuple(grid) == self.nominal_grid:
            return self.table
        gh0, gw0 = self.nominal_grid
        dim = self.table.shape[1]
        resized = _bilinear_resize_grid(
            self.table.data.reshape(gh0, gw0, dim), grid[0], grid[1]
        )
        return Tensor(resized.reshape(grid[0] * grid[1], dim))


class MultiHeadAttention:
    """Scaled dot-product self-attention with per-head dim D/heads."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int,
                 rng: Xoshiro256):
        if heads < 1 or dim % heads:
            raise InvalidHyperparam(f"heads={heads} must divide token dim {dim}")
        self.heads = heads
        self.head_dim = dim // heads
        self.q = Linear(store, f"{name}.q", dim, dim, rng)
        self.k = Linear(store, f"{name}.k", dim, dim, rng)
        self.v = Linear(store, f"{name}.v", dim, dim, rng)
        self.out = Linear(store, f"{name}.out", dim, dim, rng)

    def _split_heads(self, x, n, num):
        x = ops.reshape(x, (n, num, self.heads, self.head_dim))
        return ops.permute(x, (0, 2, 1, 3))

    def __call__(self, x):
        n, num, dim = x.shape
        q = self._split_heads(self.q(x), n, num)
        k = self._split_heads(self.k(x), n, num)
        v = self._split_heads(self.v(x), n, num)
        scores = ops.mul(ops.matmul(q, ops.permute(k, (0, 1, 3, 2))),
                         1.0 / math.sqrt(self.head_dim))
        attn = ops.softmax(scores, axis=-1)
        ctx = ops.matmul(attn, v)
        ctx = ops.permute(ctx, (0, 2, 1, 3))
        ctx = ops.reshape(ctx, (n, num, dim))
        return self.out(ctx)


class Mlp:
    """Two affine maps around a GELU, widening by MLP_RATIO."""

    def __init__(self, store: ParamStore, name: str, dim: int, rng: Xoshiro256):
        self.fc1 = Linear(store, f"{name}.fc1", dim, MLP_RATIO * dim, rng)
        self.fc2 = Linear(store, f"{name}.fc2", MLP_RATIO * dim, dim, rng)

    def __call__(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))


class EncoderLayer:
    """Pre-norm residual encoder: x += MHA(LN(x)); x += MLP(LN(x))."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int,
                 rng: Xoshiro256):
        self.norm1 = LayerNorm(store, f"{name}.norm1", dim)
        self.attn = MultiHeadAttention(store, f"{name}.attn", dim, heads, rng)
        self.norm2 = LayerNorm(store, f"{name}.norm2", dim)
        self.mlp = Mlp(store, f"{name}.mlp", dim, rng)

    def __call__(self, x):
        x = ops.add(x, self.attn(self.norm1(x)))
        return ops.add(x, self.mlp(self.norm2(x)))


class APEViT:
    """Patch tokens -> position encoding -> stacked encoders -> feature map."""

    def __init__(self, store: ParamStore, name: str, channels: int, patch: int,
                 heads: int, layers: int, ape_mode: str, rng: Xoshiro256,
                 nominal_grid: tuple | None = None):
        dim = patch * patch * channels
        if heads < 1 or dim % heads:
            raise InvalidHyperparam(
                f"heads={heads} must divide token dim {dim} (= P^2 * C)"
            )
        self.channels = channels
        self.patch = patch
        if ape_mode == "ape":
            self.encoding = AttentionPositionEncoding(store, f"{name}.ape", dim, rng)
        elif ape_mode == "cpe":
            self.encoding = ConvPositionEncoding(store, f"{name}.cpe", dim, rng)
        elif ape_mode == "pe":
            if nominal_grid is None:
                raise InvalidHyperparam("pe mode needs a nominal token grid")
            self.encoding = LearnedPositionEncoding(store, f"{name}.pe", dim,
                                                    nominal_grid, rng)
        elif ape_mode == "none":
            self.encoding = None
        else:
            raise InvalidHyperparam(f"unknown ape_mode {ape_mode!r}")
        self.layers = [
            EncoderLayer(store, f"{name}.enc{i}", dim, heads, rng)
            for i in range(layers)
        ]

    def forward_tokens(self, tokens, grid):
        if self.encoding is not None:
            tokens = ops.add(tokens, self.encoding(tokens, grid))
        for layer in self.layers:
            tokens = layer(tokens)
        return tokens

    def __call__(self, f):
        n, c, h, w = f.shape
        tokens = patch_embed(f, self.patch)
        tokens = self.forward_tokens(tokens, (h // self.patch, w // self.patch))
        return patch_fold(tokens, self.patch, c, h, w)
