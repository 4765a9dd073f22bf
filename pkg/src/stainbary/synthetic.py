"""Procedural H&E-like tiles for demos and tests.

Stain concentrations are drawn as smooth random fields and composed with
Beer-Lambert absorption, giving white background, pink stroma and purple
nuclei.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .colorspace import lab_to_rgb, rgb_to_lab

__all__ = ["he_tile", "recolor_lab", "pad_background"]

# optical density per unit concentration, RGB order
HEMATOXYLIN = np.array([0.65, 0.70, 0.29])
EOSIN = np.array([0.07, 0.99, 0.11])


def _field(rng, shape, sigma):
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    return (f - f.mean()) / (f.std() + 1e-12)


def he_tile(height: int = 128, width: int = 128, seed: int = 0,
            background: float = 0.3, nuclei_density: float = 0.004) -> np.ndarray:
    """Random uint8 RGB tile with roughly ``background`` of its area empty."""
    rng = np.random.default_rng(seed)
    shape = (height, width)
    tissue_field = _field(rng, shape, sigma=max(height, width) / 10)
    cut = np.quantile(tissue_field, background)
    tissue = ndimage.gaussian_filter((tissue_field > cut).astype(float), 1.5)

    eosin = tissue * (0.55 + 0.18 * _field(rng, shape, 3.0) + 0.08 * _field(rng, shape, 0.8))
    hema = tissue * (0.08 + 0.03 * _field(rng, shape, 2.0))

    yy, xx = np.mgrid[0:height, 0:width]
    n_nuclei = rng.poisson(nuclei_density * height * width)
    nuclei = np.zeros(shape)
    for _ in range(n_nuclei):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry, rx = rng.uniform(2.0, 5.0, size=2)
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = (dx * np.cos(theta) + dy * np.sin(theta)) / rx
        v = (-dx * np.sin(theta) + dy * np.cos(theta)) / ry
        nuclei = np.maximum(nuclei, (u * u + v * v <= 1.0) * rng.uniform(0.9, 1.5))
    nuclei = ndimage.gaussian_filter(nuclei, 0.7) * tissue
    hema = hema + nuclei * (1.0 + 0.15 * _field(rng, shape, 1.0))

    od = np.clip(hema, 0, None)[..., None] * HEMATOXYLIN + np.clip(eosin, 0, None)[..., None] * EOSIN
    od = od + 0.03 + 0.01 * rng.standard_normal((*shape, 3))
    rgb = 255.0 * np.exp(-np.clip(od, 0, None))
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def recolor_lab(image, scale=(1.0, 1.0, 1.0), shift=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Apply ``lab * scale + shift`` per channel and convert back to RGB."""
    lab = rgb_to_lab(image)
    return lab_to_rgb(lab * np.asarray(scale) + np.asarray(shift))


def pad_background(image, fraction: float = 0.5, value=(242, 242, 242)) -> np.ndarray:
    """Widen ``image`` with flat background so that ``fraction`` of it is padding."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    extra = int(round(w * fraction / (1.0 - fraction)))
    pad = np.empty((h, extra, 3), dtype=np.uint8)
    pad[...] = np.asarray(value, dtype=np.uint8)
    return np.concatenate([img, pad], axis=1)
