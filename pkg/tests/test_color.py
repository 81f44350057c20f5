import math

import numpy as np
import pytest

from tileuda.color import decode_lab, encode_lab, lab_to_rgb, rgb_to_lab, srgb_to_lab_array
from tileuda.raster import Raster, RasterError


def lab_of(rgb):
    return decode_lab(rgb_to_lab(Raster(np.array(rgb, float).reshape(1, 1, 3))).values)[0, 0]


def test_white_and_black():
    assert lab_of([1, 1, 1]) == pytest.approx([100.0, 0.0, 0.0], abs=1e-9)
    assert lab_of([0, 0, 0]) == pytest.approx([0.0, 0.0, 0.0], abs=1e-9)


def test_mid_gray():
    # sRGB decode of 0.5, then L = 116 * Y^(1/3) - 16 for a neutral color (Y = linear value)
    linear = ((0.5 + 0.055) / 1.055) ** 2.4
    expected_l = 116 * linear ** (1 / 3) - 16
    assert expected_l == pytest.approx(53.389, abs=1e-3)
    assert lab_of([0.5, 0.5, 0.5]) == pytest.approx([expected_l, 0.0, 0.0], abs=1e-9)


def test_lab_white_to_rgb():
    lab = Raster(encode_lab(np.array([100.0, 0.0, 0.0])).reshape(1, 1, 3))
    assert lab_to_rgb(lab).values[0, 0] == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)


def test_round_trip_lattice():
    g = np.linspace(0, 1, 17)
    lattice = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(17 ** 3, 1, 3)
    back = lab_to_rgb(rgb_to_lab(Raster(lattice))).values
    assert np.abs(back - lattice).max() <= 1 / 255


def test_out_of_gamut_is_clipped():
    enc = np.array([[[0.5, 0.0, 1.0], [0.5, 1.0, 0.0]], [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]])
    out = lab_to_rgb(Raster(enc)).values
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_encoding_stays_in_unit_box(rng):
    lab = srgb_to_lab_array(rng.random((1000, 3)))
    enc = encode_lab(lab)
    assert np.allclose(decode_lab(enc), lab)


def test_requires_three_channels():
    with pytest.raises(RasterError):
        rgb_to_lab(Raster(np.zeros((2, 2, 1))))
    with pytest.raises(RasterError):
        lab_to_rgb(Raster(np.zeros((2, 2, 1))))


def test_linear_segment_matches_formula():
    # below the 0.04045 knee sRGB decoding is linear (c / 12.92) and L uses the linear f branch
    c = 0.02
    y = c / 12.92
    f = y / (3 * (6 / 29) ** 2) + 4 / 29
    assert lab_of([c, c, c])[0] == pytest.approx(116 * f - 16, abs=1e-9)
    assert not math.isnan(lab_of([c, c, c])[1])
