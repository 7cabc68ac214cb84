"""Multiband image container ("MBIF"), preprocessing, and synthetic data.

MBIF layout, little-endian: magic b"MBIF", version u32 = 1, bands u16,
height u32, width u32, dtype u8 = 1 (float32), then bands*height*width
float32 values in band-major order.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import FormatError, ParameterError

MAGIC = b"MBIF"
VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sIHIIB")
_MAX_DIM = 2 ** 31


@dataclass(frozen=True)
class MultibandImage:
    """Pixel cube stored band-major as float32[bands, height, width]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 3:
            raise ParameterError(f"pixels must be 3-D [bands,h,w], got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ParameterError("pixels contain non-finite values")
        object.__setattr__(self, "pixels", pixels)

    @property
    def bands(self):
        return self.pixels.shape[0]

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]

    def to_hwc(self):
        """View as [height, width, bands] for the network layout."""
        return np.ascontiguousarray(np.moveaxis(self.pixels, 0, -1))

    @classmethod
    def from_hwc(cls, array):
        return cls(pixels=np.moveaxis(np.asarray(array, dtype=np.float32), -1, 0))


def save_multiband(image: MultibandImage, path):
    header = _HEADER.pack(MAGIC, VERSION, image.bands, image.height,
                          image.width, DTYPE_FLOAT32)
    payload = np.ascontiguousarray(image.pixels, dtype="<f4").tobytes()
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(payload)


def load_multiband(path):
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _HEADER.size:
        raise FormatError("file shorter than the MBIF header", offset=len(blob))
    magic, version, bands, height, width, dtype = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"unsupported dtype code {dtype}", offset=14)
    if bands == 0 or height == 0 or width == 0:
        raise FormatError(f"zero dimension in ({bands},{height},{width})", offset=8)
    if height >= _MAX_DIM or width >= _MAX_DIM or bands * height * width >= _MAX_DIM:
        raise FormatError(f"dimension overflow ({bands},{height},{width})", offset=8)
    count = bands * height * width
    expected = _HEADER.size + 4 * count
    if len(blob) < expected:
        raise FormatError(
            f"truncated payload: have {len(blob)} bytes, need {expected}",
            offset=len(blob),
        )
    pixels = np.frombuffer(blob, dtype="<f4", count=count, offset=_HEADER.size)
    return MultibandImage(pixels=pixels.reshape(bands, height, width).copy())


# --- resampling -----------------------------------------------------------------

def _cubic_weights(t):
    """Catmull-Rom weights (a = -0.5) for taps at offsets -1, 0, 1, 2."""
    t2 = t * t
    t3 = t2 * t
    return np.stack([
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ])


def _resize_axis(array, out_n, axis):
    moved = np.moveaxis(array, axis, -1)
    n = moved.shape[-1]
    # half-pixel-centre grid (align-corners false)
    x = (np.arange(out_n) + 0.5) * (n / out_n) - 0.5
    base = np.floor(x).astype(int)
    weights = _cubic_weights(x - base)
    taps = np.clip(base[None, :] + np.arange(-1, 3)[:, None], 0, n - 1)
    anchor = moved[..., np.clip(base, 0, n - 1)]
    # anchored form: weights sum to one, so constants pass through unchanged
    out = anchor.copy()
    for j in range(4):
        out += weights[j] * (moved[..., taps[j]] - anchor)
    return np.moveaxis(out, -1, axis)


def resize_cubic(band, out_h, out_w):
    """Catmull-Rom resample of one 2-D band, edge-clamped sampling."""
    band = np.asarray(band)
    if band.ndim != 2:
        raise ParameterError(f"band must be 2-D, got shape {band.shape}")
    if min(band.shape) < 2 or out_h < 2 or out_w < 2:
        raise ParameterError(
            f"input and output dims must be >= 2, got {band.shape} -> "
            f"({out_h}, {out_w})"
        )
    out = _resize_axis(band.astype(np.float64, copy=False), out_h, 0)
    out = _resize_axis(out, out_w, 1)
    return out.astype(band.dtype, copy=False) if band.dtype == np.float32 else out


def resize_image(image: MultibandImage, out_h, out_w):
    resized = np.stack([
        resize_cubic(image.pixels[b], out_h, out_w) for b in range(image.bands)
    ])
    return MultibandImage(pixels=resized)


def normalize(image: MultibandImage, per_band_max):
    """Divide each band by its configured maximum and clamp to [0, 1]."""
    scales = np.asarray(per_band_max, dtype=np.float32)
    if scales.shape != (image.bands,):
        raise ParameterError(
            f"per_band_max must have shape ({image.bands},), got {scales.shape}"
        )
    if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
        raise ParameterError("per_band_max entries must be finite and > 0")
    scaled = image.pixels / scales[:, None, None]
    return MultibandImage(pixels=np.clip(scaled, 0.0, 1.0))


def denormalize(image: MultibandImage, per_band_max):
    scales = np.asarray(per_band_max, dtype=np.float32)
    if scales.shape != (image.bands,):
        raise ParameterError(
            f"per_band_max must have shape ({image.bands},), got {scales.shape}"
        )
    return MultibandImage(pixels=image.pixels * scales[:, None, None])


def synth_dataset(seed, count, shape):
    """Deterministic correlated random fields standing in for real imagery.

    Each image is a Gaussian random field (white noise smoothed with a
    wrap-around Gaussian kernel); bands share a common base field plus a
    weaker independent component, then the image is min-max mapped to [0, 1].
    """
    height, width, bands = shape
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if height < 4 or width < 4 or bands < 1:
        raise ParameterError(f"shape too small: {shape}")
    rng = np.random.default_rng(seed)
    smooth_sigma = 1.8
    images = []
    for _ in range(count):
        base = ndimage.gaussian_filter(
            rng.standard_normal((height, width)), smooth_sigma, mode="wrap"
        )
        cube = np.empty((bands, height, width), dtype=np.float64)
        for b in range(bands):
            detail = ndimage.gaussian_filter(
                rng.standard_normal((height, width)), smooth_sigma, mode="wrap"
            )
            cube[b] = base + 0.35 * detail
        lo, hi = cube.min(), cube.max()
        if hi - lo < 1e-9:
            cube = np.full_like(cube, 0.5)
        else:
            cube = (cube - lo) / (hi - lo)
        images.append(MultibandImage(pixels=cube.astype(np.float32)))
    return images


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint, exhaustive index lists reproducible from the seed."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.int64)
            )


def split_dataset(n, fractions, seed):
    """Shuffle 0..n-1 and cut at the rounded cumulative fractions."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ParameterError(f"fractions must be three non-negative values, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must sum to 1, got {sum(fractions)}")
    order = np.random.default_rng(seed).permutation(n)
    first = round(fractions[0] * n)
    second = round((fractions[0] + fractions[1]) * n)
    return DatasetSplit(
        train=order[:first],
        validation=order[first:second],
        test=order[second:],
        seed=seed,
    )


def lag1_autocorrelation(band):
    """Sample autocorrelation between horizontal neighbours of one band."""
    band = np.asarray(band, dtype=np.float64)
    left = band[:, :-1].ravel()
    right = band[:, 1:].ravel()
    left = left - left.mean()
    right = right - right.mean()
    denom = math.sqrt((left * left).sum() * (right * right).sum())
    if denom == 0:
        return 1.0
    return float((left * right).sum() / denom)
