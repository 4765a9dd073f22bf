"""Structural similarity (SSIM) on image luminance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .colorspace import rgb_to_lab

__all__ = ["SsimConfig", "luminance", "ssim_map", "ssim"]


@dataclass(frozen=True)
class SsimConfig:
    window_size: int = 7
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0
    gaussian_window: bool = True
    sigma: float = 1.5

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and at least 3")
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("k1 and k2 must be positive")
        if not self.dynamic_range > 0:
            raise ValueError("dynamic_range must be positive")

    def window(self) -> np.ndarray:
        r = self.window_size // 2
        if self.gaussian_window:
            g = np.exp(-0.5 * (np.arange(-r, r + 1) / self.sigma) ** 2)
        else:
            g = np.ones(self.window_size)
        w = np.outer(g, g)
        return w / w.sum()


def luminance(image) -> np.ndarray:
    """Gray channel used for SSIM.

    RGB input gives Lab lightness rescaled to [0, 255]; a 2-D array is
    taken as already gray.
    """
    img = np.asarray(image)
    if img.ndim == 2:
        return img.astype(np.float64)
    if img.ndim == 3 and img.shape[2] >= 3:
        return rgb_to_lab(img[:, :, :3])[..., 0] * 2.55
    raise ValueError(f"cannot take luminance of an array with shape {img.shape}")


def ssim_map(image_a, image_b, config: SsimConfig | None = None) -> np.ndarray:
    """Local SSIM values; the border half-window is cropped."""
    config = config or SsimConfig()
    a, b = luminance(image_a), luminance(image_b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < config.window_size:
        raise ValueError(f"images smaller than the {config.window_size}px window")

    w = config.window()

    def local(x):
        return ndimage.correlate(x, w, mode="reflect")

    mu_a, mu_b = local(a), local(b)
    var_a = local(a * a) - mu_a * mu_a
    var_b = local(b * b) - mu_b * mu_b
    cov = local(a * b) - mu_a * mu_b
    c1 = (config.k1 * config.dynamic_range) ** 2
    c2 = (config.k2 * config.dynamic_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    r = config.window_size // 2
    return (num / den)[r:-r, r:-r]


def ssim(image_a, image_b, config: SsimConfig | None = None) -> float:
    """Mean structural similarity of two equally sized images."""
    return float(ssim_map(image_a, image_b, config).mean())
