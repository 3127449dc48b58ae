"""Three-stage hierarchical-patch super-resolution model.

Stage 1 processes the four LR quadrants, stage 2 the two vertical halves
(built by merging quadrant features top-to-bottom), stage 3 the whole
image. Each stage extracts shallow features with one conv, fuses in the
previous stage's carried features (stages 2/3), runs a MRFAG trunk, applies
the patch transformer (stages 1/2 only), and reconstructs its own HR
prediction through a sub-pixel upsampler. Merged shallow features ride
along every merge as a skip, and training losses attach to all three
predictions so early stages receive direct supervision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .config import HipaConfig
from .errors import InvalidSize, NotDivisible, ShapeMismatch
from .nn import MRFAG, APEViT, Conv2d, ParamStore, Upsampler
from .rng import Xoshiro256

INIT_STREAM = 0  # rng stream id used for parameter init


def split_image(x):
    """Quadrants of an (n, c, h, w) tensor: (TL, TR, BL, BR)."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise NotDivisible(f"cannot split odd extents {h}x{w} into quadrants")
    hh, hw = h // 2, w // 2
    tl = ops.slice_(x, (None, None, (0, hh), (0, hw)))
    tr = ops.slice_(x, (None, None, (0, hh), (hw, w)))
    bl = ops.slice_(x, (None, None, (hh, h), (0, hw)))
    br = ops.slice_(x, (None, None, (hh, h), (hw, w)))
    return tl, tr, bl, br


def merge_vertical(top, bottom):
    if top.shape[0] != bottom.shape[0] or top.shape[1] != bottom.shape[1] \
            or top.shape[3] != bottom.shape[3]:
        raise ShapeMismatch(f"vertical merge of {top.shape} and {bottom.shape}")
    return ops.concat([top, bottom], axis=2)


def merge_horizontal(left, right):
    if left.shape[0] != right.shape[0] or left.shape[1] != right.shape[1] \
            or left.shape[2] != right.shape[2]:
        raise ShapeMismatch(f"horizontal merge of {left.shape} and {right.shape}")
    return ops.concat([left, right], axis=3)


def split_halves(x):
    """Left/right column halves of an (n, c, h, w) tensor."""
    n, c, h, w = x.shape
    if w % 2:
        raise NotDivisible(f"cannot split odd width {w} into halves")
    hw = w // 2
    left = ops.slice_(x, (None, None, None, (0, hw)))
    right = ops.slice_(x, (None, None, None, (hw, w)))
    return left, right


@dataclass
class StageOutput:
    hr_image: Tensor
    carry_features: dict


class _StageHead:
    """Upscale + reconstruct: features (n,C,h,w) -> image (n,3,s*h,s*w)."""

    def __init__(self, store, name, channels, scale, rng):
        self.up = Upsampler(store, f"{name}.up", channels, scale, rng)
        self.rec = Conv2d(store, f"{name}.rec", channels, 3, 3, rng, padding=1)

    def __call__(self, f):
        return self.rec(self.up(f))


class HipaModel:
    def __init__(self, config: HipaConfig):
        config.validate()
        self.config = config
        self.params = ParamStore()
        rng = Xoshiro256(config.seed, stream=INIT_STREAM)
        store = self.params
        c = config.channels
        g1, g2, g3 = config.mrfam_per_stage
        m = config.residual_blocks
        br = tuple(config.branches)
        p = config.patch_size
        crop = config.lr_crop

        if config.hierarchy_mode == "fixed":
            # single full-image trunk, same stage-3 topology plus the
            # transformer at one fixed patch size
            self.shallow = Conv2d(store, "fixed.shallow", 3, c, 3, rng, padding=1)
            self.trunk = MRFAG(store, "fixed.mrfag", c, g3, m, br, rng)
            self.vit = APEViT(store, "fixed.vit", c, p, config.heads, config.layers,
                              config.ape_mode, rng,
                              nominal_grid=(crop // p, crop // p))
            self.head = _StageHead(store, "fixed.head", c, config.scale, rng)
            return

        # stage 1: quadrants (shared weights across the four exchangeable crops)
        self.shallow1 = Conv2d(store, "stage1.shallow", 3, c, 3, rng, padding=1)
        self.trunk1 = MRFAG(store, "stage1.mrfag", c, g1, m, br, rng)
        self.vit1 = APEViT(store, "stage1.vit", c, p, config.heads, config.layers,
                           config.ape_mode, rng,
                           nominal_grid=(crop // 2 // p, crop // 2 // p))
        self.head1 = _StageHead(store, "stage1.head", c, config.scale, rng)

        # stage 2: vertical halves
        self.shallow2 = Conv2d(store, "stage2.shallow", 3, c, 3, rng, padding=1)
        self.fuse2 = Conv2d(store, "stage2.fuse", 2 * c, c, 1, rng)
        self.trunk2 = MRFAG(store, "stage2.mrfag", c, g2, m, br, rng)
        self.vit2 = APEViT(store, "stage2.vit", c, p, config.heads, config.layers,
                           config.ape_mode, rng,
                           nominal_grid=(crop // p, crop // 2 // p))
        self.head2 = _StageHead(store, "stage2.head", c, config.scale, rng)

        # stage 3: full image, convolutional trunk only
        self.shallow3 = Conv2d(store, "stage3.shallow", 3, c, 3, rng, padding=1)
        self.fuse3 = Conv2d(store, "stage3.fuse", 2 * c, c, 1, rng)
        self.trunk3 = MRFAG(store, "stage3.mrfag", c, g3, m, br, rng)
        self.head3 = _StageHead(store, "stage3.head", c, config.scale, rng)

    # -- stages ----------------------------------------------------------
    def _check_divisible(self, h, w):
        step = 2 * self.config.patch_size
        if h % step or w % step:
            raise NotDivisible(
                f"input extents {h}x{w} must be divisible by 2*patch_size = {step}"
            )

    def stage1_forward(self, lr) -> StageOutput:
        quads = split_image(lr)
        shallows = [self.shallow1(q) for q in quads]
        deep = [self.vit1(self.trunk1(f0)) for f0 in shallows]
        # vertical merges carry a merged-shallow skip
        left = ops.add(merge_vertical(deep[0], deep[2]),
                       merge_vertical(shallows[0], shallows[2]))
        right = ops.add(merge_vertical(deep[1], deep[3]),
                        merge_vertical(shallows[1], shallows[3]))
        full = merge_horizontal(left, right)
        hr = self.head1(full)
        return StageOutput(hr, {"left": left, "right": right})

    def stage2_forward(self, lr, carry1) -> StageOutput:
        halves = split_halves(lr)
        carried = (carry1["left"], carry1["right"])
        shallows = [self.shallow2(hx) for hx in halves]
        deep = []
        for f0, prev in zip(shallows, carried):
            fused = self.fuse2(ops.concat([f0, prev], axis=1))
            deep.append(self.vit2(self.trunk2(fused)))
        merged = ops.add(merge_horizontal(deep[0], deep[1]),
                         merge_horizontal(shallows[0], shallows[1]))
        hr = self.head2(merged)
        return StageOutput(hr, {"full": merged})

    def stage3_forward(self, lr, carry2) -> StageOutput:
        f0 = self.shallow3(lr)
        fused = self.fuse3(ops.concat([f0, carry2["full"]], axis=1))
        feat = ops.add(self.trunk3(fused), f0)
        hr = self.head3(feat)
        return StageOutput(hr, {})

    def forward(self, lr):
        """Stage predictions (I1, I2, I3) for an LR batch with valid extents."""
        n, c, h, w = lr.shape
        self._check_divisible(h, w)
        if self.config.hierarchy_mode == "fixed":
            f0 = self.shallow(lr)
            feat = ops.add(self.vit(self.trunk(f0)), f0)
            hr = self.head(feat)
            return hr, hr, hr
        s1 = self.stage1_forward(lr)
        s2 = self.stage2_forward(lr, s1.carry_features)
        s3 = self.stage3_forward(lr, s2.carry_features)
        return s1.hr_image, s2.hr_image, s3.hr_image

    # -- loss --------------------------------------------------------------
    def loss(self, preds, gt):
        """Weighted sum of per-stage mean absolute errors."""
        w1, w2, w3 = self.config.loss_weights
        total = None
        for w, pred in zip((w1, w2, w3), preds):
            if pred.shape != gt.shape:
                raise ShapeMismatch(
                    f"prediction {pred.shape} does not match target {gt.shape}"
                )
            term = ops.mul(ops.mean(ops.absolute(ops.sub(pred, gt))), float(w))
            total = term if total is None else ops.add(total, term)
        return total

    # -- inference -----------------------------------------------------------
    def super_resolve(self, lr, all_stages: bool = False):
        """Run on an arbitrary-size LR image by reflect-padding to a valid
        extent and cropping the scaled output back."""
        n, c, h, w = lr.shape
        step = 2 * self.config.patch_size
        pad_h = (-h) % step
        pad_w = (-w) % step
        if pad_h >= h or pad_w >= w:
            raise InvalidSize(
                f"input {h}x{w} is too small to pad to a multiple of {step}"
            )
        x = lr
        if pad_h or pad_w:
            x = ops.pad_reflect(lr, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)))
        preds = self.forward(x)
        s = self.config.scale
        if pad_h or pad_w:
            preds = tuple(
                ops.slice_(p, (None, None, (0, s * h), (0, s * w))) for p in preds
            )
        return preds if all_stages else preds[-1]


def count_parameters(model: HipaModel) -> int:
    return model.params.num_values()


def clamp01(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0)
