"""Layers and blocks composing the autodiff primitives."""

from .params import ParamStore
from .layers import (
    BRANCH_GATE_WIDTH,
    BRANCH_GEOMETRY,
    ChannelGate,
    Conv2d,
    DepthwiseConv2d,
    DilatedChannelAttention,
    LayerNorm,
    Linear,
    ResidualBlock,
    Upsampler,
)
from .mrfag import MRFAG, MRFAM
from .transformer import (
    APEViT,
    AttentionPositionEncoding,
    ConvPositionEncoding,
    EncoderLayer,
    LearnedPositionEncoding,
    Mlp,
    MultiHeadAttention,
    patch_embed,
    patch_fold,
)

__all__ = [
    "ParamStore",
    "Conv2d",
    "DepthwiseConv2d",
    "Linear",
    "LayerNorm",
    "ChannelGate",
    "ResidualBlock",
    "DilatedChannelAttention",
    "Upsampler",
    "BRANCH_GEOMETRY",
    "BRANCH_GATE_WIDTH",
    "MRFAM",
    "MRFAG",
    "patch_embed",
    "patch_fold",
    "AttentionPositionEncoding",
    "ConvPositionEncoding",
    "LearnedPositionEncoding",
    "MultiHeadAttention",
    "Mlp",
    "EncoderLayer",
    "APEViT",
]
