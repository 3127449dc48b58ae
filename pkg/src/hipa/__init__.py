"""Hierarchical-patch transformer for single image super resolution.

Self-contained: tensors and reverse-mode autodiff, the three-stage
patch-hierarchy model, bicubic degradation pipeline, luminance PSNR/SSIM,
and an ADAM training loop, all on numpy.
"""

__version__ = "0.1.0"
