"""sRGB <-> CIE L*a*b* conversion, D65 white point, 2 degree observer.

Functions accept any array whose last axis holds the three channels.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rgb_to_lab", "lab_to_rgb", "SRGB_TO_XYZ", "WHITE_D65"]

# IEC 61966-2-1 primaries with D65; rows sum to the reference white
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
WHITE_D65 = SRGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0


def _srgb_decode(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def _finv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t ** 3, 3 * _DELTA ** 2 * (t - 4.0 / 29.0))


def rgb_to_lab(rgb) -> np.ndarray:
    """Convert 8-bit sRGB values to Lab (float64).

    >>> rgb_to_lab([255, 255, 255]).round(6)
    array([100.,   0.,   0.])
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1:] != (3,):
        raise ValueError(f"expected a trailing axis of 3 channels, got shape {rgb.shape}")
    lin = _srgb_decode(rgb / 255.0)
    xyz = lin @ SRGB_TO_XYZ.T
    fx, fy, fz = np.moveaxis(_f(xyz / WHITE_D65), -1, 0)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_rgb(lab, return_clipped: bool = False):
    """Convert Lab to 8-bit sRGB, clamping out-of-gamut channels.

    With ``return_clipped=True`` also returns a boolean array, one entry
    per color, marking colors where any channel had to be clamped.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.shape[-1:] != (3,):
        raise ValueError(f"expected a trailing axis of 3 channels, got shape {lab.shape}")
    L, a, b = np.moveaxis(lab, -1, 0)
    fy = (L + 16.0) / 116.0
    f = np.stack([fy + a / 500.0, fy, fy - b / 200.0], axis=-1)
    xyz = _finv(f) * WHITE_D65
    lin = xyz @ XYZ_TO_SRGB.T
    # encode without the gamut clamp so that clipping can be detected
    raw = np.where(lin <= 0.0031308, 12.92 * lin,
                   1.055 * np.abs(lin) ** (1.0 / 2.4) - 0.055)
    scaled = np.rint(raw * 255.0)
    clipped = np.any((scaled < 0) | (scaled > 255), axis=-1)
    out = np.clip(scaled, 0, 255).astype(np.uint8)
    if return_clipped:
        return out, clipped
    return out
