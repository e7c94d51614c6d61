"""Frame directories in, mask PNGs and JSON reports out."""

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FrameSequence

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class FrameInputError(ValueError):
    pass


def frame_files(directory):
    """``(index, path)`` pairs of numbered images, sorted by index."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameInputError(f"not a directory: {directory}")
    found = []
    for p in directory.iterdir():
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        digits = re.findall(r"\d+", p.stem)
        if not digits:
            continue
        found.append((int(digits[-1]), p))
    found.sort()
    return found


def read_rgb(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def read_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def load_frames(directory, shot_id=None):
    files = frame_files(directory)
    if len(files) < 2:
        raise FrameInputError(f"need at least 2 numbered frames in {directory}, found {len(files)}")
    frames = []
    shape = None
    for _, path in files:
        try:
            img = read_rgb(path)
        except OSError as exc:
            raise FrameInputError(f"cannot read {path}: {exc}") from None
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise FrameInputError(
                f"{path.name} is {img.shape[1]}x{img.shape[0]}, expected {shape[1]}x{shape[0]}"
            )
        frames.append(img)
    return FrameSequence(np.stack(frames), shot_id=shot_id or Path(directory).name)


def write_frames(directory, frames, prefix="", digits=4):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(directory / f"{prefix}{i:0{digits}d}.png")


def mask_to_uint8(mask):
    return np.round(255.0 * np.clip(mask, 0.0, 1.0)).astype(np.uint8)


def write_mask(path, mask):
    Image.fromarray(mask_to_uint8(mask)).save(path)


def write_masks(directory, masks, digits=4):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(masks):
        write_mask(directory / f"{i:0{digits}d}.png", m)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
