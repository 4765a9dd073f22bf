import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from skimage.color import rgb2lab

from stainbary.colorspace import WHITE_D65, lab_to_rgb, rgb_to_lab


def reference_lab(r, g, b):
    # scalar CIE formulas, written out independently of the vectorized module
    def lin(c):
        c /= 255.0
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    R, G, B = lin(float(r)), lin(float(g)), lin(float(b))
    X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B
    Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B
    Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B
    Xn, Yn, Zn = 0.95047, 1.0, 1.08883
    delta = 6.0 / 29.0

    def f(t):
        return t ** (1.0 / 3.0) if t > delta ** 3 else t / (3 * delta ** 2) + 4.0 / 29.0

    fx, fy, fz = f(X / Xn), f(Y / Yn), f(Z / Zn)
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)


def test_white_and_black():
    np.testing.assert_allclose(rgb_to_lab([255, 255, 255]), [100, 0, 0], atol=1e-2)
    np.testing.assert_allclose(rgb_to_lab([0, 0, 0]), [0, 0, 0], atol=1e-12)
    assert lab_to_rgb([100.0, 0.0, 0.0]).tolist() == [255, 255, 255]


def test_red_matches_reference_formula():
    lab = rgb_to_lab([255, 0, 0])
    np.testing.assert_allclose(lab, [53.24, 80.09, 67.20], atol=0.05)
    np.testing.assert_allclose(lab, reference_lab(255, 0, 0), atol=0.05)
    back = lab_to_rgb([53.24, 80.09, 67.20]).astype(int)
    assert np.abs(back - [255, 0, 0]).max() <= 1


def test_against_scalar_reference_and_skimage():
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (300, 3))
    ours = rgb_to_lab(px)
    ref = np.array([reference_lab(*p) for p in px])
    np.testing.assert_allclose(ours, ref, atol=0.05)
    sk = rgb2lab(px[None].astype(np.uint8), illuminant="D65", observer="2")[0]
    np.testing.assert_allclose(ours, sk, atol=0.05)


def test_shape_is_preserved():
    img = np.zeros((4, 5, 3), dtype=np.uint8)
    assert rgb_to_lab(img).shape == (4, 5, 3)
    assert lab_to_rgb(rgb_to_lab(img)).shape == (4, 5, 3)
    assert lab_to_rgb(rgb_to_lab(img)).dtype == np.uint8


def test_lattice_round_trip_exact():
    axis = np.linspace(0, 255, 17).round().astype(np.uint8)
    cube = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    assert np.array_equal(lab_to_rgb(rgb_to_lab(cube)), cube)


def test_stride_five_round_trip():
    axis = np.arange(0, 256, 5, dtype=np.uint8)
    cube = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    assert len(cube) >= 140_000
    err = np.abs(lab_to_rgb(rgb_to_lab(cube)).astype(int) - cube).max()
    assert err <= 1


def test_gray_ramp_monotone_and_neutral():
    ramp = np.repeat(np.arange(256)[:, None], 3, axis=1)
    lab = rgb_to_lab(ramp)
    assert np.all(np.diff(lab[:, 0]) > 0)
    assert np.abs(lab[:, 1:]).max() <= 0.01


def test_lightness_range():
    rng = np.random.default_rng(1)
    L = rgb_to_lab(rng.integers(0, 256, (5000, 3)))[:, 0]
    assert L.min() >= -1e-6 and L.max() <= 100 + 1e-6


def test_out_of_gamut_is_clamped_and_flagged():
    lab = np.array([[50.0, 0.0, 0.0], [50.0, 150.0, 0.0], [120.0, 0.0, 0.0], [-5.0, 0.0, 0.0]])
    rgb, clipped = lab_to_rgb(lab, return_clipped=True)
    assert clipped.tolist() == [False, True, True, True]
    assert rgb.dtype == np.uint8
    assert rgb[2].tolist() == [255, 255, 255] and rgb[3].tolist() == [0, 0, 0]


def test_white_point_constant():
    np.testing.assert_allclose(WHITE_D65, [0.95047, 1.0, 1.08883], atol=1e-4)


@given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
def test_round_trip_any_pixel(px):
    assert lab_to_rgb(rgb_to_lab(px)).tolist() == list(px)


@given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
def test_reference_agreement_any_pixel(px):
    ours = rgb_to_lab(px)
    ref = reference_lab(*px)
    assert all(math.isclose(o, r, abs_tol=0.05) for o, r in zip(ours, ref))
