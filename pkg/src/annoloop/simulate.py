"""Iterative train-annotate loop simulation and workload accounting.

The detector is replaced by a parameterized oracle and the annotator by a
perfect corrector: after each batch is inspected, its labels equal ground
truth.  Workload is counted in box actions (W_B) and seconds (W_T):

    W_B = additions + removals + objects in B_1
    W_T = B1n * T + additions * T + removals * T / 2

where T is the time to draw one box from scratch and a removal costs T/2.
Reduction is reported against labeling every object manually.

Oracle kinds:
  * perfect      - emits every ground-truth object with score 1.
  * null         - emits nothing.
  * duplicating  - emits every ground-truth object twice.
  * noisy        - emits each object with probability detect_prob, corners
                   jittered by +-jitter * (box width/height) per axis, class
                   flipped with probability class_flip_prob, plus
                   Poisson(fp_rate) false-positive boxes per image.
  * learning     - noisy with detect_prob = p_max * (1 - exp(-f / tau)) and
                   fp_rate = fp_rate0 * exp(-f / tau), f the labeled fraction.

Emitted scores model a confidence-calibrated detector: true detections draw
scores from U(0.5, 1), false positives from U(0.05, 0.5).  All randomness
comes from a stream seeded by (rng_seed, image id), so per-image results do
not depend on evaluation order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from io import StringIO

import numpy as np

from .core import BBox, DataError, Dataset, ImageRecord, ObjectLabel
from .evaluation import Prediction, match_greedy
from .sampler import BatchPlan, Ordering, ordering_to_dict

ORACLE_KINDS = ("perfect", "null", "duplicating", "noisy", "learning")

CSV_HEADER = (
    "iter,images,gt_objects,predictions,matched,additions,removals,"
    "labeled_objects_cum,wb_cum,wt_cum_s"
)


@dataclass(frozen=True)
class DetectorOracle:
    """Stand-in for a trained detector with tunable proposal quality."""

    kind: str
    rng_seed: int = 0
    detect_prob: float = 0.9
    jitter: float = 0.05
    class_flip_prob: float = 0.05
    fp_rate: float = 0.0
    p_max: float = 0.95
    tau: float = 0.25
    fp_rate0: float = 1.0
    class_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        for name in ("detect_prob", "class_flip_prob", "p_max"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} {value} outside [0, 1]")
        if self.jitter < 0:
            raise ValueError(f"jitter {self.jitter} must be >= 0")
        if self.fp_rate < 0 or self.fp_rate0 < 0:
            raise ValueError("false-positive rates must be >= 0")
        if self.tau <= 0:
            raise ValueError(f"tau {self.tau} must be > 0")
        if self.kind in ("noisy", "learning") and not self.class_names:
            raise ValueError(f"{self.kind} oracle needs the dataset class names")


@dataclass(frozen=True)
class CorrectionStats:
    """Annotator actions for one corrected image or batch."""

    additions: int
    removals: int
    matched: int


@dataclass(frozen=True)
class IterationRow:
    """Per-batch accounting; wb_cum / wt_cum_s are workloads up to this batch."""

    batch_index: int
    images: int
    gt_objects: int
    predictions: int
    matched: int
    additions: int
    removals: int
    labeled_objects_cum: int
    wb_cum: int
    wt_cum_s: float


@dataclass(frozen=True)
class LoopReport:
    """Full record of one simulated annotation campaign."""

    rows: tuple[IterationRow, ...]
    b1_objects: int
    additions_total: int
    removals_total: int
    workload_boxes: int
    workload_time_s: float
    reduction_boxes_pct: float
    reduction_time_pct: float
    total_objects: int
    total_images: int
    iou_threshold: float
    time_per_box_s: float
    oracle: DetectorOracle
    ordering: Ordering | None = field(default=None, compare=False)


def _stream_seed(rng_seed: int, image_id: str) -> int:
    digest = hashlib.sha256(f"{rng_seed}|{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _poisson_inversion(lam: float, rng: np.random.Generator) -> int:
    """Poisson draw by CDF inversion; deterministic across platforms."""
    if lam <= 0.0:
        return 0
    u = rng.random()
    k = 0
    p = math.exp(-lam)
    cdf = p
    while u > cdf and k < 100_000:
        k += 1
        p *= lam / k
        cdf += p
    return k


def _jitter_box(bbox: BBox, jitter: float, rng: np.random.Generator) -> BBox:
    w = bbox.xmax - bbox.xmin
    h = bbox.ymax - bbox.ymin
    x0 = bbox.xmin + rng.uniform(-jitter, jitter) * w
    x1 = bbox.xmax + rng.uniform(-jitter, jitter) * w
    y0 = bbox.ymin + rng.uniform(-jitter, jitter) * h
    y1 = bbox.ymax + rng.uniform(-jitter, jitter) * h
    if x1 < x0:
        x0, x1 = x1, x0
    if y1 < y0:
        y0, y1 = y1, y0
    if x1 == x0:
        x1 = x0 + 1e-9
    if y1 == y0:
        y1 = y0 + 1e-9
    return BBox(x0, y0, x1, y1)


def oracle_predict(
    oracle: DetectorOracle, image: ImageRecord, labeled_fraction: float
) -> list[Prediction]:
    """Propose boxes for one image given the fraction of objects labeled so far."""
    if oracle.kind == "perfect":
        return [Prediction(o.class_name, o.bbox, 1.0) for o in image.objects]
    if oracle.kind == "null":
        return []
    if oracle.kind == "duplicating":
        preds = []
        for o in image.objects:
            preds.append(Prediction(o.class_name, o.bbox, 1.0))
            preds.append(Prediction(o.class_name, o.bbox, 1.0))
        return preds

    if oracle.kind == "learning":
        decay = math.exp(-labeled_fraction / oracle.tau)
        detect_prob = oracle.p_max * (1.0 - decay)
        fp_rate = oracle.fp_rate0 * decay
    else:
        detect_prob = oracle.detect_prob
        fp_rate = oracle.fp_rate

    rng = np.random.default_rng(_stream_seed(oracle.rng_seed, image.id))
    preds = []
    for o in image.objects:
        if rng.random() >= detect_prob:
            continue
        bbox = _jitter_box(o.bbox, oracle.jitter, rng)
        cls = o.class_name
        if rng.random() < oracle.class_flip_prob and len(oracle.class_names) > 1:
            others = [c for c in oracle.class_names if c != cls]
            cls = others[int(rng.integers(len(others)))]
        preds.append(Prediction(cls, bbox, float(rng.uniform(0.5, 1.0))))
    for _ in range(_poisson_inversion(fp_rate, rng)):
        w = rng.uniform(0.05, 0.40) * image.width
        h = rng.uniform(0.05, 0.40) * image.height
        x0 = rng.uniform(0.0, image.width)
        y0 = rng.uniform(0.0, image.height)
        cls = oracle.class_names[int(rng.integers(len(oracle.class_names)))]
        preds.append(
            Prediction(cls, BBox(x0, y0, x0 + w, y0 + h), float(rng.uniform(0.05, 0.5)))
        )
    return preds


def simulate_correction(
    preds: list[Prediction], gt: list[ObjectLabel], threshold: float
) -> CorrectionStats:
    """Count the annotator actions needed to turn proposals into ground truth."""
    result = match_greedy(preds, gt, threshold)
    return CorrectionStats(
        additions=len(result.unmatched_gt),
        removals=len(result.unmatched_predictions),
        matched=len(result.matches),
    )


def workload_boxes(b1_objects: int, additions: int, removals: int) -> int:
    """W_B: corrections plus the boxes drawn manually for B_1."""
    if min(b1_objects, additions, removals) < 0:
        raise ValueError("workload counts must be >= 0")
    return additions + removals + b1_objects


def workload_time(
    b1_objects: int, additions: int, removals: int, time_per_box_s: float
) -> float:
    """W_T in seconds: B1n*T + additions*T + removals*T/2."""
    if time_per_box_s <= 0:
        raise ValueError(f"time_per_box_s {time_per_box_s} must be > 0")
    if min(b1_objects, additions, removals) < 0:
        raise ValueError("workload counts must be >= 0")
    return (
        b1_objects * time_per_box_s
        + additions * time_per_box_s
        + removals * time_per_box_s / 2.0
    )


def reduction_percent(workload: float, workload_full: float) -> float:
    """Percent saved versus full manual labeling; negative when the loop costs more."""
    if workload_full <= 0:
        raise ValueError(f"workload_full {workload_full} must be > 0")
    return 100.0 * (1.0 - workload / workload_full)


def run_loop(
    plan: BatchPlan,
    dataset: Dataset,
    oracle: DetectorOracle,
    threshold: float = 0.5,
    time_per_box_s: float = 10.0,
    ordering: Ordering | None = None,
) -> LoopReport:
    """Simulate the batch-by-batch annotation campaign over one plan.

    B_1 is labeled fully by hand; every later batch is proposed by the oracle
    at the labeled-object fraction reached so far, then corrected.
    """
    if not plan.batches:
        raise DataError("empty batch plan")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1)")
    if time_per_box_s <= 0:
        raise ValueError(f"time_per_box_s {time_per_box_s} must be > 0")
    plan_ids = plan.ids
    if sorted(plan_ids) != sorted(dataset.ids):
        raise DataError("batch plan does not cover the dataset ids exactly")

    total_objects = dataset.total_objects
    if total_objects == 0:
        raise DataError("dataset has no objects; workload is undefined")

    rows: list[IterationRow] = []
    b1 = plan.batches[0]
    b1_objects = sum(len(dataset.by_id(i).objects) for i in b1)
    labeled = b1_objects
    additions_total = 0
    removals_total = 0
    rows.append(
        IterationRow(
            batch_index=1,
            images=len(b1),
            gt_objects=b1_objects,
            predictions=0,
            matched=0,
            additions=0,
            removals=0,
            labeled_objects_cum=labeled,
            wb_cum=workload_boxes(b1_objects, 0, 0),
            wt_cum_s=workload_time(b1_objects, 0, 0, time_per_box_s),
        )
    )

    for batch_index, batch in enumerate(plan.batches[1:], start=2):
        fraction = labeled / total_objects
        batch_gt = 0
        batch_preds = 0
        batch_matched = 0
        batch_add = 0
        batch_rem = 0
        for image_id in batch:
            image = dataset.by_id(image_id)
            preds = oracle_predict(oracle, image, fraction)
            stats = simulate_correction(preds, list(image.objects), threshold)
            batch_gt += len(image.objects)
            batch_preds += len(preds)
            batch_matched += stats.matched
            batch_add += stats.additions
            batch_rem += stats.removals
        labeled += batch_gt
        additions_total += batch_add
        removals_total += batch_rem
        rows.append(
            IterationRow(
                batch_index=batch_index,
                images=len(batch),
                gt_objects=batch_gt,
                predictions=batch_preds,
                matched=batch_matched,
                additions=batch_add,
                removals=batch_rem,
                labeled_objects_cum=labeled,
                wb_cum=workload_boxes(b1_objects, additions_total, removals_total),
                wt_cum_s=workload_time(
                    b1_objects, additions_total, removals_total, time_per_box_s
                ),
            )
        )

    wb = workload_boxes(b1_objects, additions_total, removals_total)
    wt = workload_time(b1_objects, additions_total, removals_total, time_per_box_s)
    return LoopReport(
        rows=tuple(rows),
        b1_objects=b1_objects,
        additions_total=additions_total,
        removals_total=removals_total,
        workload_boxes=wb,
        workload_time_s=wt,
        reduction_boxes_pct=reduction_percent(wb, total_objects),
        reduction_time_pct=reduction_percent(wt, total_objects * time_per_box_s),
        total_objects=total_objects,
        total_images=len(plan_ids),
        iou_threshold=threshold,
        time_per_box_s=time_per_box_s,
        oracle=oracle,
        ordering=ordering,
    )


def oracle_to_dict(oracle: DetectorOracle) -> dict:
    return {
        "kind": oracle.kind,
        "rng_seed": oracle.rng_seed,
        "detect_prob": oracle.detect_prob,
        "jitter": oracle.jitter,
        "class_flip_prob": oracle.class_flip_prob,
        "fp_rate": oracle.fp_rate,
        "p_max": oracle.p_max,
        "tau": oracle.tau,
        "fp_rate0": oracle.fp_rate0,
    }


def oracle_from_dict(row: dict, class_names: tuple[str, ...], rng_seed: int) -> DetectorOracle:
    """Build an oracle from a JSON descriptor, injecting classes and seed."""
    known = {
        "detect_prob",
        "jitter",
        "class_flip_prob",
        "fp_rate",
        "p_max",
        "tau",
        "fp_rate0",
    }
    kind = row.get("kind")
    if kind not in ORACLE_KINDS:
        raise ValueError(f"unknown oracle kind {kind!r}")
    params = {}
    for key, value in row.items():
        if key in ("kind", "rng_seed"):
            continue
        if key not in known:
            raise ValueError(f"unknown oracle parameter {key!r}")
        params[key] = float(value)
    return DetectorOracle(
        kind=kind, rng_seed=rng_seed, class_names=class_names, **params
    )


def report_to_dict(report: LoopReport) -> dict:
    ordering_echo = None
    if report.ordering is not None:
        echo = ordering_to_dict(report.ordering)
        echo.pop("ids")
        ordering_echo = echo
    return {
        "config": {
            "iou_threshold": report.iou_threshold,
            "time_per_box_s": report.time_per_box_s,
            "oracle": oracle_to_dict(report.oracle),
            "ordering": ordering_echo,
        },
        "iterations": [
            {
                "iter": r.batch_index,
                "images": r.images,
                "gt_objects": r.gt_objects,
                "predictions": r.predictions,
                "matched": r.matched,
                "additions": r.additions,
                "removals": r.removals,
                "labeled_objects_cum": r.labeled_objects_cum,
                "wb_cum": r.wb_cum,
                "wt_cum_s": r.wt_cum_s,
            }
            for r in report.rows
        ],
        "totals": {
            "b1_objects": report.b1_objects,
            "additions": report.additions_total,
            "removals": report.removals_total,
            "workload_boxes": report.workload_boxes,
            "workload_time_s": report.workload_time_s,
            "reduction_boxes_pct": report.reduction_boxes_pct,
            "reduction_time_pct": report.reduction_time_pct,
            "total_objects": report.total_objects,
            "total_images": report.total_images,
        },
    }


def report_to_json(report: LoopReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def report_to_csv(report: LoopReport) -> str:
    out = StringIO()
    out.write(CSV_HEADER + "\n")
    for r in report.rows:
        out.write(
            f"{r.batch_index},{r.images},{r.gt_objects},{r.predictions},"
            f"{r.matched},{r.additions},{r.removals},{r.labeled_objects_cum},"
            f"{r.wb_cum},{r.wt_cum_s!r}\n"
        )
    return out.getvalue()


def reseeded(oracle: DetectorOracle, rng_seed: int) -> DetectorOracle:
    """Copy of the oracle with a different stream seed."""
    return replace(oracle, rng_seed=rng_seed)
