"""Box and mask metrics: IoU, CorLoc, precision/recall/f-measure, and loaders
for ground truth."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundingBox


@dataclass
class GroundTruth:
    boxes: dict = field(default_factory=dict)  # frame -> list[BoundingBox]
    masks: dict = field(default_factory=dict)  # frame -> bool array

    def __post_init__(self):
        if not self.boxes and not self.masks:
            raise ValueError("ground truth needs boxes or masks")


def iou_box(a, b):
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return float(inter / union) if union > 0 else 0.0


def corloc(pred, gt, thresh=0.5):
    """Percentage of annotated frames whose predicted box reaches IoU >= thresh
    with at least one ground-truth instance."""
    boxes = gt.boxes if isinstance(gt, GroundTruth) else gt
    if not boxes:
        raise ValueError("CorLoc needs ground-truth boxes")
    correct = 0
    for frame, gt_boxes in boxes.items():
        if isinstance(gt_boxes, BoundingBox):
            gt_boxes = [gt_boxes]
        p = pred.get(frame)
        if p is not None and max(iou_box(p, g) for g in gt_boxes) >= thresh:
            correct += 1
    return 100.0 * correct / len(boxes)


def _binary_pair(pred, gt):
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return p, g


def iou_mask(pred, gt):
    p, g = _binary_pair(pred, gt)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def average_iou(preds, gts):
    return float(np.mean([iou_mask(p, g) for p, g in zip(preds, gts)]))


def prf(pred, gt):
    """Precision, recall and f-measure of foreground pixels. Precision is 0
    for an empty prediction; f is 0 when precision + recall is 0."""
    p, g = _binary_pair(pred, gt)
    tp = np.count_nonzero(p & g)
    n_pred = np.count_nonzero(p)
    n_gt = np.count_nonzero(g)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"precision": float(precision), "recall": float(recall), "f_measure": float(f)}


def binarize(mask, threshold=0.5):
    return np.asarray(mask) >= threshold


def video_prf(soft_masks, gt_masks, threshold=0.5):
    """Pooled pixel precision/recall/f over a whole stack of masks."""
    return prf(binarize(soft_masks, threshold), gt_masks)


# --- ground-truth files ----------------------------------------------------


def _box_from_record(rec):
    flags = rec.get("flags", ())
    return BoundingBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"]),
                       tuple(flags))


def load_boxes(path):
    """Boxes from CSV (``frame,x,y,w,h`` header) or JSON (list of records with
    the same keys). Returns ``frame -> list[BoundingBox]``."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        records = json.loads(path.read_text())
    else:
        with path.open(newline="") as fh:
            records = list(csv.DictReader(fh))
    boxes = {}
    for rec in records:
        boxes.setdefault(int(rec["frame"]), []).append(_box_from_record(rec))
    return boxes


def load_mask_dir(path, threshold=128):
    """Binary masks from numbered PNGs; the frame index is the numeric part of
    the file name."""
    from .io import frame_files, read_gray

    return {idx: read_gray(f) >= threshold for idx, f in frame_files(path)}
