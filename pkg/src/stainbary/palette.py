"""Color quantization of an image into a discrete Lab measure.

Clustering runs on the distinct colors of the image weighted by their
pixel counts, which has the same k-means objective as clustering every
pixel but is far cheaper on 8-bit images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import vq

from .colorspace import lab_to_rgb, rgb_to_lab
from .ot_core import DiscreteMeasure

__all__ = ["ColorPalette", "extract_palette", "reconstruct", "as_rgb_image"]

DEFAULT_K = 256
MAX_LLOYD = 50
SHIFT_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ColorPalette:
    """Quantized Lab distribution of an image.

    ``measure.support[assignments[y, x]] + residuals[y, x]`` is the Lab
    value of pixel ``(y, x)``; ``counts`` holds the pixels per cluster.
    """

    measure: DiscreteMeasure
    assignments: np.ndarray
    residuals: np.ndarray
    counts: np.ndarray
    objective: np.ndarray

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.assignments.shape

    @property
    def size(self) -> int:
        return self.measure.size


def as_rgb_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {img.shape}")
    img = img[:, :, :3]
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("empty image")
    if img.dtype != np.uint8:
        if np.any(img < 0) or np.any(img > 255):
            raise ValueError("RGB values must lie in [0, 255]")
        img = img.astype(np.uint8)
    return img


def _kmeanspp(x: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = rng.choice(len(x), p=w / w.sum())
    centers = [first]
    d2 = ((x - x[first]) ** 2).sum(1)
    while len(centers) < k:
        mass = w * d2
        total = mass.sum()
        if total <= 0:
            # fewer distinct colors than clusters
            break
        nxt = rng.choice(len(x), p=mass / total)
        centers.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(1))
    return x[centers].copy()


def extract_palette(image, k: int = DEFAULT_K, seed: int = 0,
                    max_iterations: int = MAX_LLOYD, tol: float = SHIFT_TOL) -> ColorPalette:
    """Quantize ``image`` into at most ``k`` Lab clusters with k-means++.

    Empty and duplicate clusters are dropped, so the palette may have
    fewer than ``k`` colors. Results depend only on the image and ``seed``.
    """
    img = as_rgb_image(image)
    h, w = img.shape[:2]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > h * w:
        raise ValueError(f"k={k} exceeds the pixel count {h * w}")

    flat = img.reshape(-1, 3).astype(np.int64)
    packed = (flat[:, 0] << 16) | (flat[:, 1] << 8) | flat[:, 2]
    uniq, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    colors = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1)
    lab = rgb_to_lab(colors)
    cw = counts.astype(np.float64)

    rng = np.random.default_rng(seed)
    centers = _kmeanspp(lab, cw, k, rng)
    history = []
    for _ in range(max_iterations):
        # vq keeps the lowest index on exact ties
        labels, dist = vq(lab, centers, check_finite=False)
        history.append(float(cw @ (dist * dist)))
        mass = np.bincount(labels, weights=cw, minlength=len(centers))
        sums = np.stack([np.bincount(labels, weights=cw * lab[:, j], minlength=len(centers))
                         for j in range(3)], axis=1)
        filled = mass > 0
        updated = centers.copy()
        updated[filled] = sums[filled] / mass[filled, None]
        shift = np.sqrt(((updated - centers) ** 2).sum(1)).max()
        centers = updated
        if shift < tol:
            break

    used = np.unique(labels)
    remap = np.full(len(centers), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    centers = centers[used]
    labels = remap[labels]

    pixel_counts = np.bincount(labels, weights=counts, minlength=len(used)).astype(np.int64)
    weights = pixel_counts / float(h * w)
    assign = labels[inverse].reshape(h, w)
    residuals = (lab[inverse] - centers[labels[inverse]]).reshape(h, w, 3)
    return ColorPalette(
        measure=DiscreteMeasure(centers, weights),
        assignments=assign,
        residuals=residuals,
        counts=pixel_counts,
        objective=np.array(history),
    )


def reconstruct(palette: ColorPalette, support, return_clipped: bool = False):
    """Rebuild the image with every cluster moved to ``support[k]``.

    Pixels keep their offset from the cluster center, so passing the
    palette's own support returns the original image.
    """
    new = np.asarray(support, dtype=np.float64)
    if new.shape != palette.measure.support.shape:
        raise ValueError(
            f"new support has shape {new.shape}, palette support is "
            f"{palette.measure.support.shape}"
        )
    lab = new[palette.assignments] + palette.residuals
    return lab_to_rgb(lab, return_clipped=return_clipped)
