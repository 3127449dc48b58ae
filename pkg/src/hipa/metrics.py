"""Luminance-channel PSNR and SSIM plus dataset evaluation.

Both metrics run on the BT.601 studio-swing Y channel of clamped [0,1] RGB,
with a border crop of `scale` pixels per side (the reconstruction near the
border is undefined up to resampling phase, and bicubic baselines lose the
same ring).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .autodiff import Tensor
from .data import bicubic_upscale, rgb_to_y
from .errors import ShapeMismatch, TooSmall

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _as_plane(x, name: str) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} expects a single-channel image, got {arr.shape}")
    return arr.astype(np.float64)


def psnr(a, b, border: int = 0) -> float:
    """Peak signal-to-noise ratio in dB on [0,1] data; +inf when identical."""
    pa = _as_plane(a, "psnr")
    pb = _as_plane(b, "psnr")
    if pa.shape != pb.shape:
        raise ShapeMismatch(f"psnr shapes disagree: {pa.shape} vs {pb.shape}")
    h, w = pa.shape
    if h <= 2 * border or w <= 2 * border:
        raise ShapeMismatch(f"border {border} leaves no pixels of {h}x{w}")
    if border:
        pa = pa[border:-border, border:-border]
        pb = pb[border:-border, border:-border]
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a, b, border: int = 0) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window over valid positions."""
    pa = _as_plane(a, "ssim")
    pb = _as_plane(b, "ssim")
    if pa.shape != pb.shape:
        raise ShapeMismatch(f"ssim shapes disagree: {pa.shape} vs {pb.shape}")
    if border:
        if pa.shape[0] <= 2 * border or pa.shape[1] <= 2 * border:
            raise TooSmall(f"border {border} leaves no pixels of {pa.shape}")
        pa = pa[border:-border, border:-border]
        pb = pb[border:-border, border:-border]
    if pa.shape[0] < SSIM_WINDOW or pa.shape[1] < SSIM_WINDOW:
        raise TooSmall(f"ssim needs at least {SSIM_WINDOW}px per side, got {pa.shape}")

    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    def filt(img):
        return fftconvolve(img, win, mode="valid")

    mu_a = filt(pa)
    mu_b = filt(pb)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = filt(pa * pa) - mu_aa
    var_b = filt(pb * pb) - mu_bb
    cov = filt(pa * pb) - mu_ab
    num = (2.0 * mu_ab + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_aa + mu_bb + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


@dataclass
class EvalReport:
    scale: int
    border: int
    rows: list = field(default_factory=list)  # (id, psnr_db, ssim)

    def add(self, image_id: str, psnr_db: float, ssim_value: float) -> None:
        self.rows.append((image_id, psnr_db, ssim_value))

    @property
    def mean_psnr(self) -> float:
        return sum(r[1] for r in self.rows) / len(self.rows)

    @property
    def mean_ssim(self) -> float:
        return sum(r[2] for r in self.rows) / len(self.rows)

    def to_csv(self) -> str:
        lines = ["id,psnr_db,ssim"]
        for image_id, p, s in self.rows:
            lines.append(f"{image_id},{_fmt(p)},{s:.6f}")
        lines.append(f"mean,{_fmt(self.mean_psnr)},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.to_csv(), encoding="utf-8")
        tmp.replace(path)


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def evaluate(predict, dataset, scale: int) -> EvalReport:
    """Evaluate `predict(lr_tensor) -> hr_tensor` over a dataset.

    Predictions are clamped to [0,1]; metrics run on the luminance channel
    with a border crop of `scale` pixels.
    """
    report = EvalReport(scale=scale, border=scale)
    for pair in dataset:
        lr = Tensor(pair.lr.data[None])
        pred = predict(lr)
        pred_rgb = np.clip(pred.data[0], 0.0, 1.0)
        y_pred = rgb_to_y(pred_rgb)
        y_gt = rgb_to_y(np.clip(pair.hr.data, 0.0, 1.0))
        report.add(
            pair.id,
            psnr(y_pred, y_gt, border=scale),
            ssim(y_pred, y_gt, border=scale),
        )
    return report


def bicubic_predictor(scale: int):
    """Baseline predictor: plain bicubic upscaling of the LR input."""

    def predict(lr: Tensor) -> Tensor:
        out = bicubic_upscale(Tensor(lr.data[0]), scale)
        return Tensor(out.data[None])

    return predict
