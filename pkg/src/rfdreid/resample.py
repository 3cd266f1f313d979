"""Deterministic image resampling and resolution degradation.

The degradation operator defines the synthetic multi-resolution data, so the
kernels are pinned here rather than delegated to an image library whose
resampler may change between versions or platforms:

* Coordinate mapping uses the half-pixel convention:
  ``src = (dst + 0.5) * (in_size / out_size) - 0.5``.
* ``bilinear`` uses the tent kernel ``k(t) = max(0, 1 - |t|)``; ``bicubic``
  uses the Keys cubic with ``a = -0.5``.
* When downscaling, the kernel support is stretched by the scale factor
  (antialiasing); when upscaling the unit kernel is used.
* Source indices are clamped at the border and each output pixel's weights
  are renormalized to sum to one.

All functions are pure and operate on float arrays of shape (H, W) or
(H, W, C). Golden values in the test suite are defined by these kernels.
"""

from __future__ import annotations

import numpy as np

INTERPOLATIONS = ("bilinear", "bicubic")


def _kernel_bilinear(t: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - np.abs(t), 0.0, None)


def _kernel_bicubic(t: np.ndarray) -> np.ndarray:
    # Keys cubic, a = -0.5
    a = -0.5
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    out = np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        np.where(t < 2.0, a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return out


_KERNELS = {"bilinear": (_kernel_bilinear, 1.0), "bicubic": (_kernel_bicubic, 2.0)}


def resample_weights(in_size: int, out_size: int, interpolation: str) -> np.ndarray:
    """Dense (out_size, in_size) weight matrix for one axis.

    Rows sum to one; when ``out_size < in_size`` the kernel is stretched by
    ``in_size / out_size`` so the pass band shrinks with the output size.
    """
    if interpolation not in _KERNELS:
        raise ValueError(f"unknown interpolation {interpolation!r}; expected one of {INTERPOLATIONS}")
    if in_size < 1 or out_size < 1:
        raise ValueError("sizes must be >= 1")
    kernel, support = _KERNELS[interpolation]
    scale = in_size / out_size
    stretch = max(scale, 1.0)  # antialias only when shrinking
    radius = support * stretch
    weights = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        center = (i + 0.5) * scale - 0.5
        lo = int(np.floor(center - radius))
        hi = int(np.ceil(center + radius))
        idx = np.arange(lo, hi + 1)
        w = kernel((idx - center) / stretch)
        keep = w != 0.0
        idx, w = idx[keep], w[keep]
        np.add.at(weights[i], np.clip(idx, 0, in_size - 1), w)
        weights[i] /= weights[i].sum()
    return weights


def resize(image: np.ndarray, out_hw: tuple[int, int], interpolation: str = "bilinear") -> np.ndarray:
    """Resample ``image`` (H, W[, C]) to ``out_hw`` with the documented kernels."""
    if image.ndim not in (2, 3):
        raise ValueError(f"expected a (H, W) or (H, W, C) array, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("image has zero spatial extent")
    out_h, out_w = out_hw
    wy = resample_weights(h, out_h, interpolation)
    wx = resample_weights(w, out_w, interpolation)
    data = np.asarray(image, dtype=np.float64)
    out = np.tensordot(wy, data, axes=(1, 0))  # (out_h, W[, C])
    out = np.tensordot(wx, out, axes=(1, 1))  # (out_w, out_h[, C])
    out = np.swapaxes(out, 0, 1)
    return out.astype(image.dtype) if np.issubdtype(image.dtype, np.floating) else out


def degrade(image: np.ndarray, scale: int, interpolation: str = "bilinear") -> np.ndarray:
    """Lower the effective resolution of ``image`` by ``scale``.

    Downsamples to (H // scale, W // scale) and resamples back to the
    original size, so the output has identical shape but carries only the
    low-resolution content. ``scale == 1`` returns an untouched copy.
    """
    if not isinstance(scale, (int, np.integer)) or scale <= 0:
        raise ValueError(f"scale must be a positive integer, got {scale!r}")
    if image.ndim not in (2, 3):
        raise ValueError(f"expected a (H, W) or (H, W, C) array, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("image has zero spatial extent")
    if scale == 1:
        return image.copy()
    if h // scale < 1 or w // scale < 1:
        raise ValueError(f"scale {scale} leaves no pixels for a {h}x{w} image")
    small = resize(image, (h // scale, w // scale), interpolation)
    return resize(small, (h, w), interpolation)
