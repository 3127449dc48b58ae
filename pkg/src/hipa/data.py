"""Image ingestion, bicubic degradation, cropping/augmentation, batching.

All images live as float32 arrays in [0, 1], channel-first (3, h, w). The
degradation model is separable cubic-convolution resampling (a = -0.5),
half-pixel center mapping, edge-clamped taps: deterministic, and the kernel
weights sum to one at every sampling phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .autodiff import Tensor
from .errors import (
    DataError,
    DecodeError,
    InvalidSize,
    ShapeMismatch,
    TooSmall,
    UnsupportedColorType,
)
from .rng import Xoshiro256

_BICUBIC_A = -0.5


@dataclass
class ImagePair:
    """Aligned LR/HR sample in [0,1] RGB; HR extents are exactly scale x LR."""

    lr: Tensor
    hr: Tensor
    id: str
    scale: int

    def validate(self) -> "ImagePair":
        _, lh, lw = self.lr.shape
        _, hh, hw = self.hr.shape
        if (hh, hw) != (self.scale * lh, self.scale * lw):
            raise ShapeMismatch(
                f"pair {self.id}: HR {hh}x{hw} is not {self.scale}x LR {lh}x{lw}"
            )
        return self


# ---------------------------------------------------------------------------
# PNG io
# ---------------------------------------------------------------------------

def load_png(path) -> Tensor:
    """Decode a PNG into a (3, h, w) float32 tensor in [0, 1].

    Handles 8-bit RGB/RGBA/grayscale (alpha dropped, gray replicated) and
    16-bit grayscale. Palette images are expanded to RGB.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode == "P":
                img = img.convert("RGB")
                mode = "RGB"
            if mode in ("RGB", "RGBA"):
                arr = np.asarray(img, dtype=np.float32) / 255.0
                arr = arr[:, :, :3]
            elif mode in ("L", "LA"):
                arr = np.asarray(img, dtype=np.float32) / 255.0
                if arr.ndim == 3:
                    arr = arr[:, :, 0]
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            elif mode in ("I", "I;16", "I;16B", "I;16L"):
                arr = np.asarray(img, dtype=np.float32) / 65535.0
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            else:
                raise UnsupportedColorType(f"{path}: unsupported color mode {mode!r}")
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image ({exc})")
    except OSError as exc:
        raise DecodeError(f"{path}: decode failed ({exc})")
    return Tensor(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def save_png(tensor, path) -> None:
    """Write a (3, h, w) [0,1] tensor as an 8-bit RGB PNG, atomically."""
    arr = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeMismatch(f"save_png expects (3, h, w), got {arr.shape}")
    u8 = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    img = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    img.save(tmp, format="PNG")
    tmp.replace(path)


# ---------------------------------------------------------------------------
# bicubic resampling
# ---------------------------------------------------------------------------

def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Cubic convolution weights with a = -0.5."""
    a = _BICUBIC_A
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    near = (a + 2.0) * at3 - (a + 3.0) * at2 + 1.0
    far = a * at3 - 5.0 * a * at2 + 8.0 * a * at - 4.0 * a
    return np.where(at <= 1.0, near, np.where(at < 2.0, far, 0.0))


def bicubic_weights(n_in: int, n_out: int):
    """Per-output tap indices (n_out, 4) and weights (n_out, 4) for one axis."""
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    offsets = np.arange(-1, 3)
    idx = base[:, None] + offsets[None, :]
    weights = _cubic_kernel(frac[:, None] - offsets[None, :])
    idx = np.clip(idx, 0, n_in - 1)  # edge-clamped taps
    return idx, weights


def bicubic_resize(x, out_h: int, out_w: int) -> Tensor:
    """Separable cubic resample of a (c, h, w) tensor to (c, out_h, out_w)."""
    if out_h < 1 or out_w < 1:
        raise InvalidSize(f"output extents must be >= 1, got {out_h}x{out_w}")
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.ndim != 3:
        raise ShapeMismatch(f"bicubic_resize expects (c, h, w), got {arr.shape}")
    work = arr.astype(np.float64)
    c, h, w = work.shape

    idx_h, w_h = bicubic_weights(h, out_h)
    gathered = work[:, idx_h, :]                # (c, out_h, 4, w)
    work = (gathered * w_h[None, :, :, None]).sum(axis=2)

    idx_w, w_w = bicubic_weights(w, out_w)
    gathered = work[:, :, idx_w]                # (c, out_h, out_w, 4)
    work = (gathered * w_w[None, None, :, :]).sum(axis=3)
    return Tensor(work.astype(arr.dtype if arr.dtype == np.float64 else np.float32))


def bicubic_upscale(lr, scale: int) -> Tensor:
    _, h, w = lr.shape
    return bicubic_resize(lr, scale * h, scale * w)


# ---------------------------------------------------------------------------
# pair construction, cropping, augmentation
# ---------------------------------------------------------------------------

def make_pair(hr, scale: int, id: str = "") -> ImagePair:
    """Crop HR to scale-divisible extents and derive LR by bicubic downscale."""
    arr = hr.data if isinstance(hr, Tensor) else np.asarray(hr)
    _, h, w = arr.shape
    if h < scale or w < scale:
        raise TooSmall(f"HR {h}x{w} smaller than scale {scale}")
    h2, w2 = h - h % scale, w - w % scale
    cropped = arr[:, :h2, :w2]
    lr = bicubic_resize(cropped, h2 // scale, w2 // scale)
    lr = Tensor(np.clip(lr.data, 0.0, 1.0))
    return ImagePair(lr=lr, hr=Tensor(cropped.copy()), id=id, scale=scale).validate()


def sample_crop(pair: ImagePair, lr_crop: int, rng: Xoshiro256) -> ImagePair:
    """Aligned random crop: LR window lr_crop^2, HR window (s*lr_crop)^2."""
    _, h, w = pair.lr.shape
    if h < lr_crop or w < lr_crop:
        raise TooSmall(f"LR {h}x{w} smaller than crop {lr_crop}")
    top = rng.randint(h - lr_crop + 1)
    left = rng.randint(w - lr_crop + 1)
    s = pair.scale
    lr = pair.lr.data[:, top:top + lr_crop, left:left + lr_crop]
    hr = pair.hr.data[:, s * top:s * (top + lr_crop), s * left:s * (left + lr_crop)]
    return ImagePair(Tensor(lr.copy()), Tensor(hr.copy()), pair.id, s)


def _dihedral(arr: np.ndarray, k: int) -> np.ndarray:
    """One of the 8 square symmetries: k&3 quarter-turns, bit 2 = horizontal flip."""
    out = np.rot90(arr, k & 3, axes=(1, 2))
    if k & 4:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def augment(pair: ImagePair, rng: Xoshiro256) -> ImagePair:
    """Random rotation by 0/90/180/270 degrees plus optional horizontal flip,
    applied identically to LR and HR."""
    k = rng.randint(8)
    return ImagePair(
        Tensor(_dihedral(pair.lr.data, k)),
        Tensor(_dihedral(pair.hr.data, k)),
        pair.id,
        pair.scale,
    )


def stack_pairs(pairs) -> tuple:
    """Batch same-size pairs into (n,3,h,w) LR and HR tensors."""
    lr = np.stack([p.lr.data for p in pairs])
    hr = np.stack([p.hr.data for p in pairs])
    return Tensor(lr), Tensor(hr)


# ---------------------------------------------------------------------------
# luminance
# ---------------------------------------------------------------------------

def rgb_to_y(x) -> Tensor:
    """BT.601 studio-swing luminance of a (3, h, w) [0,1] image -> (1, h, w)."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeMismatch(f"rgb_to_y expects (3, h, w), got {arr.shape}")
    r, g, b = arr[0], arr[1], arr[2]
    y = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0
    return Tensor(np.clip(y, 0.0, 1.0)[None])


# ---------------------------------------------------------------------------
# manifests and datasets
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    files: list
    scale: int
    split: str = ""


def load_manifest(path, scale: int, split: str = "") -> DatasetManifest:
    """Read a newline-separated list of image paths relative to the manifest."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    root = path.parent
    files = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        entry = line.split("#", 1)[0].strip()
        if not entry:
            continue
        full = root / entry
        if not full.is_file():
            raise DataError(f"{path}:{lineno}: listed file missing: {full}")
        files.append(entry)
    if not files:
        raise DataError(f"manifest {path} lists no files")
    if len(set(files)) != len(files):
        raise DataError(f"manifest {path} contains duplicate entries")
    return DatasetManifest(root=root, files=files, scale=scale, split=split)


class SRDataset:
    """Eagerly decoded LR/HR pairs derived from the manifest's HR images."""

    def __init__(self, manifest: DatasetManifest):
        self.scale = manifest.scale
        self.pairs = [
            make_pair(load_png(manifest.root / name), manifest.scale, id=name)
            for name in manifest.files
        ]

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i) -> ImagePair:
        return self.pairs[i]
