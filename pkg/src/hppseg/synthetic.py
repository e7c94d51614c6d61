"""Synthetic videos with exact ground truth, used by tests, ``bench`` and ``ksweep``."""

from dataclasses import dataclass

import numpy as np

from .core import BoundingBox, FrameSequence, gaussian_smooth

SQUARE_COLOR = (215, 35, 45)


@dataclass
class SyntheticVideo:
    video: FrameSequence
    gt_masks: np.ndarray  # (T, H, W) bool
    gt_boxes: list  # BoundingBox per frame


def textured_background(height, width, rng, noise_density=0.05, noise_color=SQUARE_COLOR,
                        grain=0.0):
    """Smooth multi-color texture in greens, blues and grays, salted with
    isolated pixels of ``noise_color`` so that pixel color alone is ambiguous."""
    fields = [gaussian_smooth(rng.standard_normal((height, width)), 4.0) for _ in range(3)]
    fields = [f / (np.abs(f).max() + 1e-12) for f in fields]
    r = 70 + 45 * fields[0]
    g = 130 + 70 * fields[1]
    b = 120 + 80 * fields[2]
    rgb = np.stack([r, g, b], axis=-1)
    if grain > 0:
        rgb = rgb + grain * rng.standard_normal(rgb.shape)
    bg = np.clip(rgb, 0, 255).astype(np.uint8)
    salt = rng.random((height, width)) < noise_density
    bg[salt] = noise_color
    return bg


def add_dotted_band(bg, color, rows, pitch=3, ground=(30, 30, 30)):
    """Paint a dark horizontal band dotted with single pixels of ``color``.
    The dots share the object's color but always sit next to ``ground``."""
    y0, y1 = rows
    bg[y0:y1] = ground
    bg[y0:y1:pitch, ::pitch] = color
    return bg


def moving_square(height=120, width=160, n_frames=30, size=20, speed=2.0, seed=0,
                  noise_density=0.0, grain=25.0, dotted_bands=True, color=SQUARE_COLOR,
                  static=False):
    """A uniformly colored square translating ``speed`` px/frame (mostly
    horizontally, with a gentle vertical drift) over a static texture.

    With ``dotted_bands`` the top and bottom tenth of the frame are dark bands
    dotted with the square's color, so single-pixel color is ambiguous while
    the color's neighborhood is not.
    """
    rng = np.random.default_rng(seed)
    bg = textured_background(height, width, rng, noise_density, color, grain=grain)
    if dotted_bands:
        band = max(1, height // 10)
        add_dotted_band(bg, color, (2, 2 + band))
        add_dotted_band(bg, color, (height - 2 - band, height - 2))
    travel_x = speed * (n_frames - 1)
    x_start = (width - size - travel_x) / 2.0
    y_mid = (height - size) / 2.0
    frames = np.empty((n_frames, height, width, 3), dtype=np.uint8)
    masks = np.zeros((n_frames, height, width), dtype=bool)
    boxes = []
    for t in range(n_frames):
        step = 0 if static else t
        x0 = int(round(x_start + speed * step))
        y0 = int(round(y_mid + 0.15 * height * np.sin(2 * np.pi * step / max(n_frames, 2))))
        x0 = min(max(x0, 0), width - size)
        y0 = min(max(y0, 0), height - size)
        frame = bg.copy()
        frame[y0:y0 + size, x0:x0 + size] = color
        frames[t] = frame
        masks[t, y0:y0 + size, x0:x0 + size] = True
        boxes.append(BoundingBox(x0, y0, size, size))
    return SyntheticVideo(FrameSequence(frames, shot_id="moving-square"), masks, boxes)


def uniform_video(height=60, width=80, n_frames=10, color=(90, 120, 150)):
    frames = np.empty((n_frames, height, width, 3), dtype=np.uint8)
    frames[...] = color
    return FrameSequence(frames, shot_id="uniform")
