"""Geometric matching of predictions to ground truth and AP/mAP metrics.

Matching is class-aware and greedy by descending IoU: a wrong-class overlap
never matches, so it costs one removal plus one addition downstream.  AP uses
all-point interpolation of the precision-recall curve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BBox, DataError, ObjectLabel


@dataclass(frozen=True)
class Prediction:
    """A detector proposal: class, box, confidence in [0, 1]."""

    class_name: str
    bbox: BBox
    score: float

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValueError("empty class name")
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class MatchResult:
    """One-to-one assignment of predictions to ground-truth objects.

    ``matches`` holds (prediction index, gt index, iou) triples; the other two
    collections are the leftover indices on each side.
    """

    matches: tuple[tuple[int, int, float], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_gt: tuple[int, ...]


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    iy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def match_greedy(
    preds: list[Prediction], gt: list[ObjectLabel], threshold: float
) -> MatchResult:
    """Greedily match predictions to ground truth by descending IoU.

    Candidate pairs must share a class name and reach the IoU threshold.
    Ties are broken by lower prediction index, then lower gt index.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1)")
    candidates = []
    for pi, p in enumerate(preds):
        for gi, g in enumerate(gt):
            if p.class_name != g.class_name:
                continue
            overlap = iou(p.bbox, g.bbox)
            if overlap >= threshold:
                candidates.append((-overlap, pi, gi))
    candidates.sort()
    pred_taken = [False] * len(preds)
    gt_taken = [False] * len(gt)
    matches = []
    for neg_overlap, pi, gi in candidates:
        if pred_taken[pi] or gt_taken[gi]:
            continue
        pred_taken[pi] = True
        gt_taken[gi] = True
        matches.append((pi, gi, -neg_overlap))
    return MatchResult(
        matches=tuple(matches),
        unmatched_predictions=tuple(i for i, t in enumerate(pred_taken) if not t),
        unmatched_gt=tuple(i for i, t in enumerate(gt_taken) if not t),
    )


def average_precision(
    preds_by_image: dict[str, list[Prediction]],
    gt_by_image: dict[str, list[ObjectLabel]],
    class_name: str,
    threshold: float,
) -> float | None:
    """All-point interpolated AP for one class at the given IoU threshold.

    Predictions are ranked by score globally (ties broken by image id, then by
    per-image prediction order) and matched greedily against not-yet-consumed
    ground truth of the same image and class.  Returns None when the class has
    no ground-truth instance.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1)")
    gt_boxes: dict[str, list[BBox]] = {}
    npos = 0
    for image_id, labels in gt_by_image.items():
        boxes = [g.bbox for g in labels if g.class_name == class_name]
        if boxes:
            gt_boxes[image_id] = boxes
            npos += len(boxes)
    if npos == 0:
        return None

    ranked = []
    for image_id in sorted(preds_by_image):
        for idx, p in enumerate(preds_by_image[image_id]):
            if p.class_name == class_name:
                ranked.append((-p.score, image_id, idx, p.bbox))
    ranked.sort(key=lambda r: r[:3])

    consumed: dict[str, list[bool]] = {k: [False] * len(v) for k, v in gt_boxes.items()}
    tp = np.zeros(len(ranked))
    fp = np.zeros(len(ranked))
    for rank, (_, image_id, _, bbox) in enumerate(ranked):
        best_iou, best_gi = 0.0, -1
        for gi, gbox in enumerate(gt_boxes.get(image_id, [])):
            if consumed[image_id][gi]:
                continue
            overlap = iou(bbox, gbox)
            if overlap >= threshold and overlap > best_iou:
                best_iou, best_gi = overlap, gi
        if best_gi >= 0:
            consumed[image_id][best_gi] = True
            tp[rank] = 1.0
        else:
            fp[rank] = 1.0

    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / npos
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1.0)

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def per_class_ap(
    preds_by_image: dict[str, list[Prediction]],
    gt_by_image: dict[str, list[ObjectLabel]],
    threshold: float,
) -> dict[str, float]:
    """AP for every class with at least one ground-truth instance."""
    classes = sorted({g.class_name for labels in gt_by_image.values() for g in labels})
    result = {}
    for cls in classes:
        ap = average_precision(preds_by_image, gt_by_image, cls, threshold)
        assert ap is not None  # every listed class has gt
        result[cls] = ap
    return result


def mean_average_precision(
    preds_by_image: dict[str, list[Prediction]],
    gt_by_image: dict[str, list[ObjectLabel]],
    threshold: float,
) -> float:
    """Unweighted mean of AP over classes that appear in the ground truth."""
    aps = per_class_ap(preds_by_image, gt_by_image, threshold)
    if not aps:
        raise DataError("no class has ground-truth instances")
    return float(sum(aps.values()) / len(aps))


def load_predictions(path: str | Path) -> dict[str, list[Prediction]]:
    """Load a JSON Lines prediction file keyed by image id.

    Each line: {"id": "...", "predictions": [{"class": "...",
    "bbox": [xmin, ymin, xmax, ymax], "score": 0.9}]}.
    """
    path = Path(path)
    result: dict[str, list[Prediction]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: malformed JSON ({exc.msg})") from exc
            image_id = row.get("id")
            if not isinstance(image_id, str) or not image_id:
                raise DataError(f"{where}: missing or empty id")
            if image_id in result:
                raise DataError(f"{where}: duplicate id {image_id!r}")
            preds = []
            for entry in row.get("predictions", []):
                cls = entry.get("class")
                if not isinstance(cls, str) or not cls:
                    raise DataError(f"{where}: missing or empty prediction class")
                raw = entry.get("bbox", [])
                if len(raw) != 4:
                    raise DataError(f"{where}: bbox must have 4 coordinates")
                try:
                    bbox = BBox(*(float(c) for c in raw))
                    preds.append(Prediction(cls, bbox, float(entry.get("score", 0.0))))
                except (TypeError, ValueError) as exc:
                    raise DataError(f"{where}: {exc}") from exc
            result[image_id] = preds
    return result
