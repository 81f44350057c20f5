"""Data-based adaptation transforms mapping a target tile toward a reference.

All functions are deterministic and shape-preserving, and return rasters
clipped to [0, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .color import decode_lab, encode_lab, lab_to_srgb_array, srgb_to_lab_array
from .raster import Raster, RasterError

DEFAULT_BETA = 0.01
DEFAULT_EIGENVALUE_FLOOR = 1e-8


class TransformKind(enum.Enum):
    NONE = "none"
    HM = "hm"
    LAB_HM = "lab-hm"
    FDA = "fda"
    PDA = "pda"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "TransformKind":
        key = str(text).strip().lower().replace("_", "-")
        for kind in cls:
            if key in (kind.value, kind.label.lower()):
                return kind
        raise ValueError(f"unknown transform kind {text!r}")


_LABELS = {
    TransformKind.NONE: "None",
    TransformKind.HM: "HM",
    TransformKind.LAB_HM: "LAB-HM",
    TransformKind.FDA: "FDA",
    TransformKind.PDA: "PDA",
}


class PDAMode(enum.Enum):
    WHITEN = "whiten"
    ROTATE_ONLY = "rotate-only"


@dataclass(frozen=True)
class TransformSpec:
    """Which transform to apply, plus the parameters that kind uses.

    ``beta`` is only meaningful for FDA and the PDA fields only for PDA;
    they are filled with defaults for those kinds and must stay ``None``
    otherwise.
    """

    kind: TransformKind = TransformKind.NONE
    beta: Optional[float] = None
    pda_mode: Optional[PDAMode] = None
    eigenvalue_floor: Optional[float] = None

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, TransformKind) else TransformKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TransformKind.FDA:
            beta = DEFAULT_BETA if self.beta is None else float(self.beta)
            if not 0.0 <= beta <= 0.5:
                raise ValueError(f"FDA beta must be in [0, 0.5], got {beta}")
            object.__setattr__(self, "beta", beta)
        elif self.beta is not None:
            raise ValueError(f"beta only applies to FDA, not {kind.label}")
        if kind is TransformKind.PDA:
            mode = PDAMode.WHITEN if self.pda_mode is None else PDAMode(self.pda_mode)
            floor = DEFAULT_EIGENVALUE_FLOOR if self.eigenvalue_floor is None else float(self.eigenvalue_floor)
            if not floor > 0:
                raise ValueError(f"eigenvalue_floor must be positive, got {floor}")
            object.__setattr__(self, "pda_mode", mode)
            object.__setattr__(self, "eigenvalue_floor", floor)
        elif self.pda_mode is not None or self.eigenvalue_floor is not None:
            raise ValueError(f"PDA parameters do not apply to {kind.label}")

    @property
    def label(self) -> str:
        return self.kind.label

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.beta is not None:
            out["beta"] = self.beta
        if self.pda_mode is not None:
            out["pda_mode"] = self.pda_mode.value
            out["eigenvalue_floor"] = self.eigenvalue_floor
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        kind = TransformKind.parse(d.get("kind", "none"))
        return cls(
            kind,
            beta=d.get("beta") if kind is TransformKind.FDA else None,
            pda_mode=d.get("pda_mode") if kind is TransformKind.PDA else None,
            eigenvalue_floor=d.get("eigenvalue_floor") if kind is TransformKind.PDA else None,
        )


# -- histogram matching -------------------------------------------------------

def _cdf_positions(values: np.ndarray):
    """Sorted unique values, inverse index, and mid-rank CDF positions.

    Tied pixels share the average of the ranks they occupy.
    """
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    pos = (np.cumsum(counts) - 0.5 * counts) / values.size
    return uniq, inverse, pos


def match_channel(target: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Empirical-CDF matching of one channel: ``Q_ref(F_tgt(v))``."""
    _, t_inv, t_pos = _cdf_positions(target.ravel())
    r_vals, _, r_pos = _cdf_positions(reference.ravel())
    mapped = np.interp(t_pos, r_pos, r_vals)
    return mapped[t_inv].reshape(target.shape)


def _match_array(target: np.ndarray, reference: np.ndarray) -> np.ndarray:
    out = np.empty_like(target)
    for c in range(target.shape[2]):
        out[:, :, c] = match_channel(target[:, :, c], reference[:, :, c])
    return out


def histogram_match(target: Raster, reference: Raster) -> Raster:
    """Per-channel histogram matching in the raster's own color space."""
    if target.channels != reference.channels:
        raise RasterError(
            f"channel mismatch: target {target.channels}, reference {reference.channels}"
        )
    return target.with_values(np.clip(_match_array(target.values, reference.values), 0.0, 1.0))


def lab_histogram_match(target: Raster, reference: Raster) -> Raster:
    """Histogram matching of L, a and b independently, then back to sRGB."""
    if target.channels != 3 or reference.channels != 3:
        raise RasterError("LAB histogram matching needs 3-channel inputs")
    t_lab = encode_lab(srgb_to_lab_array(target.values))
    r_lab = encode_lab(srgb_to_lab_array(reference.values))
    matched = _match_array(t_lab, r_lab)
    return target.with_values(lab_to_srgb_array(decode_lab(matched)))


# -- Fourier domain adaptation ------------------------------------------------

def fda_window(height: int, width: int, beta: float):
    """Row/column slices of the centered low-frequency window.

    Covers frequencies with ``|k| < b`` on both axes, ``b = floor(beta *
    min(H, W))``, in fftshift-ed coordinates. The window is closed under
    ``k -> -k`` so the swapped spectrum stays Hermitian. ``None`` when
    ``b == 0``.
    """
    b = int(np.floor(beta * min(height, width)))
    if b == 0:
        return None
    ch, cw = height // 2, width // 2
    return slice(ch - b + 1, ch + b), slice(cw - b + 1, cw + b)


def fda_spectrum(target: np.ndarray, reference: np.ndarray, beta: float) -> np.ndarray:
    """Centered complex spectrum of the adapted image (H x W x C)."""
    h, w = target.shape[:2]
    spec_t = np.fft.fftshift(np.fft.fft2(target, axes=(0, 1)), axes=(0, 1))
    win = fda_window(h, w, beta)
    if win is None:
        return spec_t
    spec_r = np.fft.fftshift(np.fft.fft2(reference, axes=(0, 1)), axes=(0, 1))
    amp = np.abs(spec_t)
    amp[win] = np.abs(spec_r[win])
    return amp * np.exp(1j * np.angle(spec_t))


def fda_array(target: np.ndarray, reference: np.ndarray, beta: float, clip: bool = True) -> np.ndarray:
    """Low-frequency amplitude swap on raw H x W x C arrays.

    With ``clip=False`` the real part is returned as is, which is what the
    spectral checks need.
    """
    if target.shape != reference.shape:
        raise RasterError(f"FDA needs equal shapes, got {target.shape} vs {reference.shape}")
    if not 0.0 <= beta <= 0.5:
        raise RasterError(f"FDA beta must be in [0, 0.5], got {beta}")
    if fda_window(target.shape[0], target.shape[1], beta) is None:
        return np.array(target, dtype=np.float64, copy=True)
    spec = fda_spectrum(target, reference, beta)
    out = np.fft.ifft2(np.fft.ifftshift(spec, axes=(0, 1)), axes=(0, 1)).real
    return np.clip(out, 0.0, 1.0) if clip else out


def fda(target: Raster, reference: Raster, beta: float = DEFAULT_BETA) -> Raster:
    """Fourier domain adaptation: take the reference's low-frequency amplitude."""
    return target.with_values(fda_array(target.values, reference.values, beta))


# -- pixel distribution adaptation --------------------------------------------

@dataclass(frozen=True)
class PixelStats:
    """Mean color and principal axes of a pixel cloud.

    ``basis`` columns are eigenvectors sorted by descending eigenvalue.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray


def fit_pixel_stats(raster: Raster, floor: float = DEFAULT_EIGENVALUE_FLOOR) -> PixelStats:
    if raster.channels != 3:
        raise RasterError("pixel statistics need a 3-channel raster")
    x = raster.values.reshape(-1, 3)
    if x.shape[0] < 2:
        raise RasterError("pixel statistics need at least 2 pixels")
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / x.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    evals, evecs = evals[order], evecs[:, order]
    # sign: largest-magnitude component non-negative (argmax picks the lowest index on ties)
    lead = np.argmax(np.abs(evecs), axis=0)
    signs = np.where(evecs[lead, np.arange(3)] < 0, -1.0, 1.0)
    return PixelStats(mean, evecs * signs, np.maximum(evals, floor))


def pda_array(
    target: np.ndarray,
    target_stats: PixelStats,
    source_stats: PixelStats,
    mode: PDAMode = PDAMode.WHITEN,
    clip: bool = True,
) -> np.ndarray:
    x = target.reshape(-1, 3)
    z = (x - target_stats.mean) @ target_stats.basis
    if mode is PDAMode.WHITEN:
        z = z * np.sqrt(source_stats.eigenvalues / target_stats.eigenvalues)
    out = (z @ source_stats.basis.T + source_stats.mean).reshape(target.shape)
    return np.clip(out, 0.0, 1.0) if clip else out


def pda(
    target: Raster,
    source: Raster,
    mode: PDAMode = PDAMode.WHITEN,
    floor: float = DEFAULT_EIGENVALUE_FLOOR,
) -> Raster:
    """Re-express target pixels in the source's principal-component frame.

    Pixels are projected on the target's principal axes (and whitened in
    ``whiten`` mode), then mapped back through the source's axes, scales and
    mean.
    """
    if target.channels != 3 or source.channels != 3:
        raise RasterError("PDA needs 3-channel inputs")
    mode = PDAMode(mode)
    t_stats = fit_pixel_stats(target, floor)
    s_stats = fit_pixel_stats(source, floor)
    return target.with_values(pda_array(target.values, t_stats, s_stats, mode))


def apply_transform(spec: TransformSpec, target: Raster, reference: Optional[Raster] = None) -> Raster:
    kind = spec.kind
    if kind is TransformKind.NONE:
        return target
    if reference is None:
        raise ValueError(f"{kind.label} needs a reference raster")
    if kind is TransformKind.HM:
        return histogram_match(target, reference)
    if kind is TransformKind.LAB_HM:
        return lab_histogram_match(target, reference)
    if kind is TransformKind.FDA:
        return fda(target, reference, spec.beta)
    if kind is TransformKind.PDA:
        return pda(target, reference, spec.pda_mode, spec.eigenvalue_floor)
    raise ValueError(f"unhandled transform {kind}")
