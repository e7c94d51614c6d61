"""Background motion as a 6-parameter affine flow fitted to image derivatives.

Pixels that do not follow the background motion are foreground candidates.
Regressing the temporal derivative on the rows

    [Ix, Iy, x Ix, y Ix, x Iy, y Iy]

over background pixels gives ``It ~ D_m w_m``; under brightness constancy the
flow is ``u = -(w0 + w2 x + w3 y)``, ``v = -(w1 + w4 x + w5 y)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import gaussian_smooth, normalize_unit

RESIDUAL_FLOOR = 1e-9


@dataclass(frozen=True)
class AffineMotionModel:
    params: np.ndarray  # w_m, regression coefficients
    frame_index: int
    n_bg_pixels: int
    degenerate: bool
    shape: tuple  # (H, W) of the raster the model was fitted on
    coord_scale: tuple  # (sx, sy): pixel offsets from center per unit coordinate

    @property
    def translation(self):
        """Background flow (u, v) in pixels at the image center."""
        return -self.params[0], -self.params[1]

    @property
    def linear_part(self):
        """Flow Jacobian [[du/dx, du/dy], [dv/dx, dv/dy]] in pixel units."""
        sx, sy = self.coord_scale
        w = self.params
        return -np.array([[w[2] / sx, w[3] / sy], [w[4] / sx, w[5] / sy]])


def image_derivatives(frame_t, frame_t1):
    """Central-difference ``Ix``, ``Iy`` of ``frame_t`` (reflected borders) and
    ``It = frame_t1 - frame_t``."""
    f0 = np.asarray(frame_t, dtype=np.float64)
    f1 = np.asarray(frame_t1, dtype=np.float64)
    if f0.shape != f1.shape:
        raise ValueError(f"frame shapes differ: {f0.shape} vs {f1.shape}")
    p = np.pad(f0, 1, mode="symmetric")
    ix = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    iy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return ix, iy, f1 - f0


def _coords(shape, normalize):
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    sx = max(cx, 1.0) if normalize else 1.0
    sy = max(cy, 1.0) if normalize else 1.0
    x = (np.arange(w) - cx) / sx
    y = (np.arange(h) - cy) / sy
    return x[None, :], y[:, None], (sx, sy)


def motion_rows(ix, iy, x, y):
    """Stack of the six regressors, shape (..., 6)."""
    x = np.broadcast_to(x, ix.shape)
    y = np.broadcast_to(y, ix.shape)
    return np.stack([ix, iy, x * ix, y * ix, x * iy, y * iy], axis=-1)


def fit_affine_background(ix, iy, it, bg_mask, frame_index=0, normalize_coords=True):
    """Least-squares affine background motion over pixels where ``bg_mask`` is set.

    Coordinates are centered and scaled to [-1, 1] per axis. Fits with fewer
    than six pixels or a rank-deficient design are flagged ``degenerate`` and
    carry the zero model.
    """
    shape = np.shape(ix)
    x, y, scale = _coords(shape, normalize_coords)
    bg = np.asarray(bg_mask, dtype=bool)
    n_bg = int(bg.sum())
    zero = AffineMotionModel(np.zeros(6), frame_index, n_bg, True, shape, scale)
    if n_bg < 6:
        return zero
    D = motion_rows(ix, iy, x, y)[bg]
    target = np.asarray(it)[bg]
    gram = D.T @ D
    rhs = D.T @ target
    if not np.any(rhs):
        # nothing moved on the background
        degenerate = np.linalg.matrix_rank(gram) < 6
        return AffineMotionModel(np.zeros(6), frame_index, n_bg, bool(degenerate), shape, scale)
    if np.linalg.matrix_rank(D) < 6:
        return zero
    try:
        w = linalg.solve(gram, rhs, assume_a="pos", check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return zero
    w = w + linalg.solve(gram, rhs - gram @ w, assume_a="pos", check_finite=False)
    if not np.all(np.isfinite(w)):
        return zero
    return AffineMotionModel(w, frame_index, n_bg, False, shape, scale)


def motion_residual(model, ix, iy, it):
    """``|D_m(p) w_m - It(p)|`` at every pixel."""
    sx, sy = model.coord_scale
    h, w = np.shape(ix)
    x = (np.arange(w) - (w - 1) / 2.0)[None, :] / sx
    y = (np.arange(h) - (h - 1) / 2.0)[:, None] / sy
    pred = motion_rows(ix, iy, x, y) @ model.params
    return np.abs(pred - it)


def motion_residual_mask(model, ix, iy, it, object_spread, alpha=1.0, clip_percentile=95.0):
    """Soft motion mask: normalized residual blurred with
    ``sigma = alpha * (std_x, std_y)`` of the estimated object region.

    Residuals at rounding level (below 1e-9 of the largest ``|It|``) count as
    zero, so an exactly affine scene gives an all-zero mask.
    """
    res = motion_residual(model, ix, iy, it)
    res[res <= RESIDUAL_FLOOR * np.abs(it).max()] = 0.0
    res = normalize_unit(res, clip_percentile)
    std_x, std_y = object_spread
    return np.clip(gaussian_smooth(res, (alpha * std_y, alpha * std_x)), 0.0, 1.0)


def object_spread(mask, threshold=0.5, fallback_frac=0.1):
    """Weighted (std_x, std_y) of pixels with ``mask >= threshold``."""
    m = np.asarray(mask, dtype=np.float64)
    h, w = m.shape
    weights = np.where(m >= threshold, m, 0.0)
    total = weights.sum()
    if total <= 0:
        return fallback_frac * w, fallback_frac * h
    ys, xs = np.mgrid[0:h, 0:w]
    mx = (weights * xs).sum() / total
    my = (weights * ys).sum() / total
    sx = np.sqrt((weights * (xs - mx) ** 2).sum() / total)
    sy = np.sqrt((weights * (ys - my) ** 2).sum() / total)
    return max(sx, 1.0), max(sy, 1.0)


def combine_masks(appearance, motion, clip_percentile=95.0):
    a = np.asarray(appearance, dtype=np.float64)
    m = np.asarray(motion, dtype=np.float64)
    if a.shape != m.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {m.shape}")
    return normalize_unit(a * m, clip_percentile)
