"""Whole-video foreground/background color statistics and per-pixel
Bayesian classification over the quantized HSV palette.

The color likelihoods follow the per-color fraction definition

    p(c|fg) = n(c, fg) / n(c),    p(c|bg) = n(c, bg) / n(c)

rather than the usual class-conditional histograms, combined with equal
priors. With pseudo-count ``eps`` each likelihood becomes
``(n(c, .) + eps) / (n(c) + 2 eps)`` and the posterior reduces to the
smoothed fraction of color-``c`` pixels labeled foreground.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .core import N_COLORS, normalize_unit, quantize_hsv


@dataclass(frozen=True)
class ColorModel:
    fg_counts: np.ndarray  # n(c, fg), float (weights allowed)
    total_counts: np.ndarray  # n(c)
    posterior: np.ndarray  # p(fg | c)
    smoothing: float = 1.0

    @property
    def bg_counts(self):
        return self.total_counts - self.fg_counts

    def likelihoods(self):
        eps = self.smoothing
        denom = self.total_counts + 2.0 * eps
        # unseen colors with eps == 0 come out as nan
        with np.errstate(invalid="ignore", divide="ignore"):
            p_fg = (self.fg_counts + eps) / denom
            p_bg = (self.bg_counts + eps) / denom
        return p_fg, p_bg


def posterior_from_counts(fg_counts, total_counts, smoothing=1.0):
    fg = np.asarray(fg_counts, dtype=np.float64)
    total = np.asarray(total_counts, dtype=np.float64)
    denom = total + 2.0 * smoothing
    with np.errstate(invalid="ignore", divide="ignore"):
        p_fg = (fg + smoothing) / denom
        p_bg = (total - fg + smoothing) / denom
        post = p_fg / (p_fg + p_bg)
    # only reachable with smoothing == 0 and an unseen color
    return np.where(np.isfinite(post), post, 0.5)


def accumulate_counts(qframe, mask, fg_threshold=0.5, soft=False):
    """Per-frame (fg, total) count arrays; counts are additive across frames."""
    q = np.asarray(qframe).reshape(-1)
    m = np.asarray(mask, dtype=np.float64).reshape(-1)
    total = np.bincount(q, minlength=N_COLORS).astype(np.float64)
    weights = m if soft else (m >= fg_threshold).astype(np.float64)
    fg = np.bincount(q, weights=weights, minlength=N_COLORS)
    return fg, total


def estimate_color_model(frames, masks, fg_threshold=0.5, *, smoothing=1.0, soft=False,
                         normalize=True, clip_percentile=95.0, quantized=None):
    """Pool color counts over the whole video.

    Each mask is first mapped to [0, 1] with :func:`normalize_unit` (unless
    ``normalize`` is False); pixels at or above ``fg_threshold`` count as
    foreground. ``soft=True`` weights foreground counts by the normalized mask
    value instead. ``quantized`` may carry precomputed color indices.
    """
    if not 0.0 < fg_threshold < 1.0:
        raise ValueError("fg_threshold must lie in (0, 1)")
    if quantized is None:
        quantized = [quantize_hsv(f) for f in frames]
    if len(quantized) != len(masks):
        raise ValueError(f"got {len(quantized)} frames but {len(masks)} masks")

    fg = np.zeros(N_COLORS)
    total = np.zeros(N_COLORS)
    for q, m in zip(quantized, masks):
        m = normalize_unit(m, clip_percentile) if normalize else np.asarray(m, dtype=np.float64)
        f_c, t_c = accumulate_counts(q, m, fg_threshold, soft)
        fg += f_c
        total += t_c

    n_fg = fg.sum()
    if n_fg == 0:
        warnings.warn("no pixel labeled foreground; color model is smoothing-dominated", RuntimeWarning)
    elif n_fg >= total.sum():
        warnings.warn("every pixel labeled foreground; color model is smoothing-dominated", RuntimeWarning)
    return ColorModel(fg, total, posterior_from_counts(fg, total, smoothing), smoothing)


def pixel_posterior(model, c):
    if not 0 <= int(c) < N_COLORS:
        raise ValueError(f"color index {c} out of range")
    c = int(c)
    return float(posterior_from_counts(model.fg_counts[c], model.total_counts[c], model.smoothing))


def classify_frame(frame, model, quantized=None):
    """Foreground probability per pixel by posterior lookup."""
    q = quantize_hsv(frame) if quantized is None else quantized
    return model.posterior[q]
