"""sRGB <-> CIELAB conversion (sRGB primaries, D65 white).

LAB rasters are stored in [0, 1] with these fixed affine encodings:

    L_enc = L / 100
    a_enc = (a + 128) / 255
    b_enc = (b + 128) / 255

Encoded values are clipped to [0, 1]; every in-gamut sRGB color lands well
inside that box (a in [-87, 99], b in [-108, 95]).
"""

import numpy as np

from .raster import Raster, RasterError

# http://www.brucelindbloom.com/index.html?Eqn_RGB_XYZ_Matrix.html
RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
# Reference white as the image of sRGB (1, 1, 1) so white maps to a = b = 0 exactly.
WHITE_D65 = RGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0
LAB_OFFSET = np.array([0.0, 128.0, 128.0])
LAB_SCALE = np.array([100.0, 255.0, 255.0])


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    lo = c * 12.92
    hi = 1.055 * np.power(np.maximum(c, 0.0031308), 1.0 / 2.4) - 0.055
    return np.where(c <= 0.0031308, lo, hi)


def _f(t):
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > _DELTA, t ** 3, 3 * _DELTA ** 2 * (t - 4.0 / 29.0))


def srgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) sRGB in [0, 1] -> (..., 3) CIELAB (L in [0, 100])."""
    xyz = srgb_to_linear(rgb) @ RGB_TO_XYZ.T
    fx, fy, fz = np.moveaxis(_f(xyz / WHITE_D65), -1, 0)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_srgb_array(lab: np.ndarray) -> np.ndarray:
    """Inverse of :func:`srgb_to_lab_array`, clipped to the [0, 1] gamut."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = _f_inv(np.stack([fx, fy, fz], axis=-1)) * WHITE_D65
    rgb = linear_to_srgb(xyz @ XYZ_TO_RGB.T)
    return np.clip(rgb, 0.0, 1.0)


def encode_lab(lab: np.ndarray) -> np.ndarray:
    return np.clip((lab + LAB_OFFSET) / LAB_SCALE, 0.0, 1.0)


def decode_lab(enc: np.ndarray) -> np.ndarray:
    return np.asarray(enc, dtype=np.float64) * LAB_SCALE - LAB_OFFSET


def _require_rgb(raster: Raster):
    if raster.channels != 3:
        raise RasterError(f"color conversion needs 3 channels, got {raster.channels}")


def rgb_to_lab(raster: Raster) -> Raster:
    """sRGB raster -> encoded LAB raster (see module docstring)."""
    _require_rgb(raster)
    return raster.with_values(encode_lab(srgb_to_lab_array(raster.values)))


def lab_to_rgb(raster: Raster) -> Raster:
    _require_rgb(raster)
    return raster.with_values(lab_to_srgb_array(decode_lab(raster.values)))
