"""Shared raster types and primitives: HSV color quantization, Gaussian
smoothing, the centered prior and robust [0, 1] normalization."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

N_HUE = 15
N_SAT = 11
N_VAL = 7
N_COLORS = N_HUE * N_SAT * N_VAL  # 1155


class FrameSequence:
    """Ordered RGB frames of one shot, stored as a (T, H, W, 3) uint8 array."""

    def __init__(self, frames, shot_id=""):
        frames = np.asarray(frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"expected (T, H, W, 3) frames, got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise ValueError("a frame sequence needs at least 2 frames")
        if frames.dtype != np.uint8:
            if frames.min() < 0 or frames.max() > 255:
                raise ValueError("frame values must lie in [0, 255]")
            frames = frames.astype(np.uint8)
        self.frames = frames
        self.frames.setflags(write=False)
        self.shot_id = shot_id

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    @property
    def shape(self):
        return self.frames.shape[1:3]

    @cached_property
    def gray(self):
        """Luma in [0, 1], (T, H, W) float64."""
        return to_gray(self.frames)

    @cached_property
    def quantized(self):
        """Color indices, (T, H, W) int16."""
        return quantize_hsv(self.frames)


@dataclass
class SoftMask:
    """Foreground probability field; values in [0, 1]."""

    values: np.ndarray
    height: int = field(init=False)
    width: int = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("soft mask must be 2-D")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("soft mask values must lie in [0, 1]")
        self.height, self.width = self.values.shape


def to_gray(rgb):
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def rgb_to_hsv(rgb):
    """Vectorized RGB (0..255) to HSV with H in [0, 360), S and V in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    vmax = rgb.max(axis=-1)
    vmin = rgb.min(axis=-1)
    chroma = vmax - vmin
    sat = np.divide(chroma, vmax, out=np.zeros_like(vmax), where=vmax > 0)

    safe = np.where(chroma > 0, chroma, 1.0)
    hue = np.zeros_like(vmax)
    is_r = (vmax == r) & (chroma > 0)
    is_g = (vmax == g) & (chroma > 0) & ~is_r
    is_b = (chroma > 0) & ~is_r & ~is_g
    hue = np.where(is_r, ((g - b) / safe) % 6.0, hue)
    hue = np.where(is_g, (b - r) / safe + 2.0, hue)
    hue = np.where(is_b, (r - g) / safe + 4.0, hue)
    hue = (hue * 60.0) % 360.0
    return hue, sat, vmax


def hsv_bins(hue, sat, val):
    """1-based (h, s, v) bin triple; top edges fall into the last bin."""
    h = np.minimum((np.asarray(hue) / 360.0 * N_HUE).astype(np.int64), N_HUE - 1) + 1
    s = np.minimum((np.asarray(sat) * N_SAT).astype(np.int64), N_SAT - 1) + 1
    v = np.minimum((np.asarray(val) * N_VAL).astype(np.int64), N_VAL - 1) + 1
    return h, s, v


def bins_to_index(h, s, v):
    return (h - 1) * (N_SAT * N_VAL) + (s - 1) * N_VAL + (v - 1)


def _integer_bins(rgb):
    # exact bin triple for 0..255 integer channels (no rounding at bin edges)
    c = np.asarray(rgb, dtype=np.int64)
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    vmax = c.max(axis=-1)
    chroma = vmax - c.min(axis=-1)
    safe = np.where(chroma > 0, chroma, 1)
    num = np.where(vmax == r, (g - b) % (6 * safe),
                   np.where(vmax == g, b - r + 2 * safe, r - g + 4 * safe))
    h = np.where(chroma > 0, np.minimum(num * N_HUE // (6 * safe), N_HUE - 1), 0) + 1
    s = np.where(vmax > 0, np.minimum(chroma * N_SAT // np.maximum(vmax, 1), N_SAT - 1), 0) + 1
    v = np.minimum(vmax * N_VAL // 255, N_VAL - 1) + 1
    return h, s, v


def quantize_hsv(rgb):
    """Map RGB pixel(s) to a flat color index in [0, 1155).

    Accepts a single triple or any array whose last axis is RGB; returns an
    int (scalar input) or an int16 array of the leading shape. Integer input
    is binned exactly; float input goes through :func:`rgb_to_hsv`.
    """
    arr = np.asarray(rgb)
    if np.issubdtype(arr.dtype, np.integer):
        idx = bins_to_index(*_integer_bins(arr))
    else:
        idx = bins_to_index(*hsv_bins(*rgb_to_hsv(arr)))
    if arr.ndim == 1:
        return int(idx)
    return idx.astype(np.int16)


def gaussian_kernel1d(sigma, truncate=4.0):
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(mask, sigma, unit_range=False):
    """Separable Gaussian blur with reflected borders.

    ``sigma`` is a scalar or a ``(sigma_y, sigma_x)`` pair. With
    ``unit_range`` the result is rescaled by its maximum so the peak is 1.
    """
    values = np.asarray(mask, dtype=np.float64)
    sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (2,))
    if np.any(sig < 0):
        raise ValueError("sigma must be non-negative")
    out = values.copy()
    for axis, s in enumerate(sig):
        if s > 0:
            out = ndimage.correlate1d(out, gaussian_kernel1d(s), axis=axis, mode="reflect")
    if unit_range:
        peak = out.max()
        if peak > 0:
            out = out / peak
    return out


def center_prior(height, width, sigma_x, sigma_y):
    if min(height, width) <= 0 or min(sigma_x, sigma_y) <= 0:
        raise ValueError("dimensions and sigmas must be positive")
    y = np.arange(height, dtype=np.float64) - (height - 1) / 2.0
    x = np.arange(width, dtype=np.float64) - (width - 1) / 2.0
    gy = np.exp(-0.5 * (y / sigma_y) ** 2)
    gx = np.exp(-0.5 * (x / sigma_x) ** 2)
    return np.outer(gy, gx)


def normalize_unit(field, clip_percentile=95.0):
    """Robust min-max rescale to [0, 1].

    Values above the ``clip_percentile`` percentile saturate to 1. When that
    percentile coincides with the minimum (sparse fields), the maximum is used
    as the upper end instead. A constant field maps to zeros. Pass
    ``clip_percentile=None`` (or 100) for plain min-max.
    """
    values = np.asarray(field, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    lo = values.min()
    hi = values.max() if clip_percentile is None else np.percentile(values, clip_percentile)
    if hi <= lo:
        hi = values.max()
    if hi <= lo:
        return np.zeros_like(values)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


def resize_bilinear(image, shape):
    """Resample a 2-D array to ``shape`` with pixel-center aligned bilinear
    interpolation (edge values replicated)."""
    image = np.asarray(image, dtype=np.float64)
    out_h, out_w = shape
    in_h, in_w = image.shape
    if (in_h, in_w) == (out_h, out_w):
        return image.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def downscale_area(image, factor):
    """Box-average downscale of a 2-D array by an integer factor.

    The input is edge-padded up to a multiple of ``factor``; use
    :func:`upscale_area` to go back to the original grid.
    """
    image = np.asarray(image, dtype=np.float64)
    if factor <= 1:
        return image.copy()
    h, w = image.shape
    hh, ww = -(-h // factor), -(-w // factor)
    padded = np.pad(image, ((0, hh * factor - h), (0, ww * factor - w)), mode="edge")
    return padded.reshape(hh, factor, ww, factor).mean(axis=(1, 3))


def upscale_area(small, factor, shape):
    """Bilinear inverse of :func:`downscale_area` onto a grid of ``shape``."""
    if factor <= 1:
        return np.asarray(small, dtype=np.float64).copy()
    hh, ww = small.shape
    full = resize_bilinear(small, (hh * factor, ww * factor))
    return full[: shape[0], : shape[1]]


@dataclass
class BoundingBox:
    """Axis-aligned box; ``(x, y)`` is the top-left pixel, extents in pixels."""

    x: int
    y: int
    w: int
    h: int
    flags: tuple = ()

    @property
    def area(self):
        return self.w * self.h

    def to_dict(self):
        return {"x": int(self.x), "y": int(self.y), "w": int(self.w), "h": int(self.h),
                "flags": list(self.flags)}
