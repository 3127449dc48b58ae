"""Multi-reception-field attention module (MRFAM) and group (MRFAG).

An MRFAM refines features through residual blocks, looks at them through
parallel dilated-convolution channel-attention branches (receptive fields
1/3/5), fuses the branches, and re-adds the group's source features. A
MRFAG chains G such modules, feeding the group input to every module as the
shared source, and closes with a 3x3 conv under a long skip.
"""

from __future__ import annotations

from ..autodiff import ops
from ..errors import InvalidHyperparam
from ..rng import Xoshiro256
from .layers import Conv2d, DilatedChannelAttention, ResidualBlock
from .params import ParamStore


class MRFAM:
    def __init__(self, store: ParamStore, name: str, channels: int, num_blocks: int,
                 branches: tuple, rng: Xoshiro256):
        if num_blocks < 1:
            raise InvalidHyperparam(f"MRFAM needs at least one residual block, got {num_blocks}")
        if not branches:
            raise InvalidHyperparam("MRFAM needs at least one attention branch")
        self.blocks = [
            ResidualBlock(store, f"{name}.rb{i}", channels, rng)
            for i in range(num_blocks)
        ]
        self.branches = [
            DilatedChannelAttention(store, f"{name}.branch{b}", channels, b, rng)
            for b in branches
        ]
        self.fuse = Conv2d(store, f"{name}.fuse",
                           len(branches) * channels, channels, 1, rng)

    def __call__(self, x, source):
        """source is the group input, re-added after the fused branches."""
        h = x
        for block in self.blocks:
            h = block(h)
        feats = [branch(h) for branch in self.branches]
        fused = self.fuse(feats[0] if len(feats) == 1 else ops.concat(feats, axis=1))
        return ops.add(source, fused)


class MRFAG:
    def __init__(self, store: ParamStore, name: str, channels: int, num_modules: int,
                 num_blocks: int, branches: tuple, rng: Xoshiro256):
        if num_modules < 1:
            raise InvalidHyperparam(f"MRFAG needs at least one module, got {num_modules}")
        self.modules = [
            MRFAM(store, f"{name}.mrfam{g}", channels, num_blocks, branches, rng)
            for g in range(num_modules)
        ]
        self.tail = Conv2d(store, f"{name}.tail", channels, channels, 3, rng, padding=1)

    def __call__(self, x):
        f = x
        for module in self.modules:
            f = module(f, x)
        return ops.add(x, self.tail(f))
