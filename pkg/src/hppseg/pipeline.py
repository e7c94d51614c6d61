"""End-to-end segmentation: frame PCA cue, two pixel-level color models, the
patch regression, motion fusion, and per-frame boxes by mean shift."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import logging
import math
import os
import time

import numpy as np

from . import colormodel, motion, patchmodel, subspace
from .core import (BoundingBox, FrameSequence, center_prior, downscale_area, gaussian_smooth,
                   normalize_unit, upscale_area)

log = logging.getLogger(__name__)

STAGE_GROUPS = ("step1-2", "step3-4", "step5", "step6")
STAGE_MASKS = ("P1", "S1", "P2", "S2", "S3", "M")

TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG = 0, 128, 255


@dataclass
class PipelineConfig:
    n_u: int = subspace.DEFAULT_FRAME_COMPONENTS
    n_mask_components: int = subspace.DEFAULT_MASK_COMPONENTS
    sigma1_frac: float = 0.05
    sigma2_frac: float = 0.02
    center_sigma_frac: float = 0.5
    fg_threshold: float = 0.5
    color_smoothing: float = 1.0
    soft_color_counts: bool = False
    window: int = patchmodel.DEFAULT_WINDOW
    stride: int = patchmodel.DEFAULT_STRIDE
    k: int = patchmodel.DEFAULT_K
    lam: float = patchmodel.DEFAULT_LAMBDA
    max_samples: int = patchmodel.DEFAULT_MAX_SAMPLES
    clip_percentile: float = 99.5
    alpha_motion_smooth: float = 1.0
    bbox_beta: float = 2.0
    bbox_bandwidth_frac: float = 0.2
    pca_max_dim: int = 120
    scale_window: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma1_frac", "sigma2_frac", "center_sigma_frac", "fg_threshold",
                     "bbox_bandwidth_frac"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        for name in ("n_u", "n_mask_components", "window", "stride", "k", "max_samples",
                     "pca_max_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.clip_percentile <= 100.0:
            raise ValueError("clip_percentile must lie in (0, 100]")
        if self.lam < 0 or self.alpha_motion_smooth < 0 or self.bbox_beta <= 0:
            raise ValueError("lam and alpha_motion_smooth must be >= 0, bbox_beta > 0")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self):
        return asdict(self)


@dataclass
class PipelineResult:
    soft_masks: np.ndarray  # S4, (T, H, W)
    boxes: list
    timings: dict  # seconds per frame for each group in STAGE_GROUPS
    stage_masks: dict = field(default_factory=dict)
    motion_models: list = field(default_factory=list)

    @property
    def total_time(self):
        return sum(self.timings.values())


REFERENCE_SHORT_SIDE = 240


def patch_window(cfg, shape):
    """Window side actually used for a frame of ``shape``.

    With ``scale_window`` the configured window refers to a 240-pixel short
    side and shrinks or grows with the frame, staying odd and >= 3. The grid
    stride is a sampling density and is not scaled.
    """
    if not cfg.scale_window:
        return cfg.window
    window = max(3, int(round(cfg.window * min(shape) / REFERENCE_SHORT_SIDE)))
    return window + 1 - window % 2


def _pool_map(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def default_threads():
    env = os.environ.get("HPPSEG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# --- stages --------------------------------------------------------------


def initial_cues(gray, cfg):
    """Step 1: smoothed PCA reconstruction error times a centered prior,
    computed at reduced resolution and mapped to [0, 1] per frame."""
    t, h, w = gray.shape
    factor = max(1, math.ceil(max(h, w) / cfg.pca_max_dim))
    small = np.stack([downscale_area(g, factor) for g in gray])
    sh, sw = small.shape[1:]
    model = subspace.fit_pca(small.reshape(t, -1), min(cfg.n_u, t - 1), strict=False)
    err = np.abs(small.reshape(t, -1) - subspace.reconstruct(model, small.reshape(t, -1)))
    err = err.reshape(t, sh, sw)
    sigma = cfg.sigma1_frac * min(sh, sw)
    prior = center_prior(sh, sw, cfg.center_sigma_frac * sw, cfg.center_sigma_frac * sh)
    out = np.empty((t, h, w))
    for i in range(t):
        cue = gaussian_smooth(err[i], sigma) * prior
        out[i] = normalize_unit(upscale_area(cue, factor, (h, w)), cfg.clip_percentile)
    return out


def pixel_stage(quantized, cues, cfg):
    model = colormodel.estimate_color_model(
        None, cues, cfg.fg_threshold, smoothing=cfg.color_smoothing,
        soft=cfg.soft_color_counts, clip_percentile=cfg.clip_percentile, quantized=quantized)
    return model, model.posterior[quantized]


def patch_stage(quantized, labels, cfg, k=None, threads=None):
    """Step 5: fit the patch regression on ``labels`` and evaluate it densely."""
    window = patch_window(cfg, quantized.shape[1:])
    reg = patchmodel.train_patch_model(quantized, labels, cfg.k if k is None else k, cfg.lam,
                                       window, cfg.stride, cfg.max_samples, cfg.seed)
    return np.stack(_pool_map(lambda q: patchmodel.evaluate_dense(q, reg, window),
                              quantized, threads))


def motion_stage(gray, appearance, cfg, threads=None):
    """Step 6 for every frame; returns (motion masks, fused masks, models)."""
    t = len(gray)

    def one(i):
        j = i + 1 if i + 1 < t else i - 1
        ix, iy, it = motion.image_derivatives(gray[i], gray[j])
        app = normalize_unit(appearance[i], cfg.clip_percentile)
        model = motion.fit_affine_background(ix, iy, it, app < 0.5, frame_index=i)
        if model.degenerate:
            return np.zeros_like(app), app, model
        spread = motion.object_spread(app)
        m = motion.motion_residual_mask(model, ix, iy, it, spread, cfg.alpha_motion_smooth,
                                        cfg.clip_percentile)
        return m, motion.combine_masks(appearance[i], m, cfg.clip_percentile), model

    results = _pool_map(one, range(t), threads)
    return (np.stack([r[0] for r in results]), np.stack([r[1] for r in results]),
            [r[2] for r in results])


def run_pipeline(video, cfg=None, debug_stages=False, threads=None):
    cfg = cfg or PipelineConfig()
    if not isinstance(video, FrameSequence):
        video = FrameSequence(video)
    t, (h, w) = len(video), video.shape
    timings = {}
    stages = {}

    t0 = time.perf_counter()
    gray = video.gray
    quantized = video.quantized
    p1 = initial_cues(gray, cfg)
    _, s1 = pixel_stage(quantized, p1, cfg)
    timings["step1-2"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    p2 = subspace.project_masks(s1, cfg.n_mask_components, sigma=cfg.sigma2_frac * min(h, w))
    _, s2 = pixel_stage(quantized, p2, cfg)
    timings["step3-4"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    s3 = patch_stage(quantized, s2, cfg, threads=threads)
    timings["step5"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    m, s4, models = motion_stage(gray, s3, cfg, threads)
    boxes = _pool_map(lambda mk: extract_bbox(mk, cfg), s4, threads)
    timings["step6"] = time.perf_counter() - t0

    timings = {k: v / t for k, v in timings.items()}
    if debug_stages:
        stages = {"P1": p1, "S1": s1, "P2": p2, "S2": s2, "S3": s3, "M": m}
    return PipelineResult(s4, boxes, timings, stages, models)


# --- boxes and trimaps -----------------------------------------------------


def mean_shift_mode(points, weights, bandwidth, tol=0.5, max_iter=50):
    """Flat-kernel weighted mean shift started from the weighted centroid.

    ``points`` are ``(x, y)`` rows. Stops once the shift drops below ``tol``
    pixels or after ``max_iter`` iterations.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    wts = np.asarray(weights, dtype=np.float64).reshape(-1)
    keep = wts > 0
    if not np.any(keep):
        raise ValueError("mean shift needs at least one point with positive weight")
    pts, wts = pts[keep], wts[keep]
    mode = (pts * wts[:, None]).sum(axis=0) / wts.sum()
    r2 = float(bandwidth) ** 2
    for _ in range(max_iter):
        inside = ((pts - mode) ** 2).sum(axis=1) <= r2
        if not np.any(inside):
            break
        wi = wts[inside]
        new = (pts[inside] * wi[:, None]).sum(axis=0) / wi.sum()
        shift = np.hypot(*(new - mode))
        mode = new
        if shift < tol:
            break
    return float(mode[0]), float(mode[1])


def extract_bbox(mask, cfg=None, threshold=0.5):
    """Box around the dominant high-probability blob.

    The center is the mean-shift mode of pixels with ``mask >= threshold``
    (weighted by mask value, bandwidth ``bbox_bandwidth_frac`` of the
    diagonal). Half extents are ``bbox_beta`` weighted standard deviations
    about the mode, over the pixels inside the bandwidth window.
    """
    cfg = cfg or PipelineConfig()
    m = np.asarray(mask, dtype=np.float64)
    h, w = m.shape
    ys, xs = np.nonzero(m >= threshold)
    if len(xs) == 0 or not np.any(m[ys, xs] > 0):
        return BoundingBox(0, 0, w, h, ("empty",))
    wts = m[ys, xs]
    pts = np.column_stack([xs, ys]).astype(np.float64)
    bandwidth = cfg.bbox_bandwidth_frac * math.hypot(h, w)
    mx, my = mean_shift_mode(pts, wts, bandwidth)
    near = ((pts[:, 0] - mx) ** 2 + (pts[:, 1] - my) ** 2) <= bandwidth ** 2
    if not np.any(near):
        near = np.ones(len(pts), dtype=bool)
    wn = wts[near]
    sx = math.sqrt(float((wn * (pts[near, 0] - mx) ** 2).sum() / wn.sum()))
    sy = math.sqrt(float((wn * (pts[near, 1] - my) ** 2).sum() / wn.sum()))
    hx, hy = cfg.bbox_beta * sx, cfg.bbox_beta * sy
    # pixel i spans [i, i + 1)
    x0 = int(np.clip(round(mx + 0.5 - hx), 0, w - 1))
    y0 = int(np.clip(round(my + 0.5 - hy), 0, h - 1))
    x1 = int(np.clip(round(mx + 0.5 + hx), x0 + 1, w))
    y1 = int(np.clip(round(my + 0.5 + hy), y0 + 1, h))
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def export_trimap(mask, lo=0.2, hi=0.8):
    """Three-level raster for external refinement: 255 where ``mask >= hi``,
    0 where ``mask <= lo``, 128 in between."""
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("need 0 <= lo < hi <= 1")
    m = np.asarray(mask, dtype=np.float64)
    tri = np.full(m.shape, TRIMAP_UNKNOWN, dtype=np.uint8)
    tri[m <= lo] = TRIMAP_BG
    tri[m >= hi] = TRIMAP_FG
    return tri
