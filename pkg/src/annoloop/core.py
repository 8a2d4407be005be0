"""Core domain types and dataset / feature file loaders.

File formats:
  * annotations: UTF-8 JSON Lines, one image per line:
      {"id": "img1", "seq": 0, "width": 640, "height": 480,
       "objects": [{"class": "car", "bbox": [xmin, ymin, xmax, ymax]}]}
    "seq" is optional and defaults to the record's 0-based position in the file.
  * features: UTF-8 CSV with header ``id,f0,f1,...,f{D-1}``, one row per image.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Boxes may poke past the image by at most this much before being rejected;
# smaller overhangs are clamped back inside.
BOUNDS_TOLERANCE = 1e-6


class DataError(Exception):
    """Raised when an input file or data structure violates the format contract."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel units, corners as (xmin, ymin, xmax, ymax)."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        coords = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite bbox coordinates {coords}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate bbox {coords}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


@dataclass(frozen=True)
class ObjectLabel:
    """A single annotated object: class name plus box."""

    class_name: str
    bbox: BBox

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValueError("empty class name")


@dataclass(frozen=True)
class ImageRecord:
    """One image with its ground-truth objects.

    ``seq`` is the temporal index used by temporal ordering; loaders default it
    to the record's position in the annotation file.
    """

    id: str
    seq: int
    width: int
    height: int
    objects: tuple[ObjectLabel, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("empty image id")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"non-positive image size {self.width}x{self.height}")
        for obj in self.objects:
            b = obj.bbox
            if b.xmin < 0 or b.ymin < 0 or b.xmax > self.width or b.ymax > self.height:
                raise ValueError(
                    f"bbox {(b.xmin, b.ymin, b.xmax, b.ymax)} outside image "
                    f"bounds {self.width}x{self.height} of {self.id!r}"
                )


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of images; order is the annotation file order."""

    images: tuple[ImageRecord, ...]

    def __post_init__(self) -> None:
        index: dict[str, ImageRecord] = {}
        for img in self.images:
            if img.id in index:
                raise ValueError(f"duplicate image id {img.id!r}")
            index[img.id] = img
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(img.id for img in self.images)

    @property
    def class_set(self) -> tuple[str, ...]:
        """Class names present in the dataset, sorted for determinism."""
        return tuple(sorted({o.class_name for img in self.images for o in img.objects}))

    @property
    def total_objects(self) -> int:
        return sum(len(img.objects) for img in self.images)

    def by_id(self, image_id: str) -> ImageRecord:
        index: dict[str, ImageRecord] = getattr(self, "_index")
        return index[image_id]


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-image feature vectors; row i of ``vectors`` belongs to ``ids[i]``."""

    ids: tuple[str, ...]
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {v.shape}")
        if len(self.ids) != v.shape[0]:
            raise ValueError(f"{len(self.ids)} ids but {v.shape[0]} feature rows")
        if v.shape[0] > 0 and v.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite feature values")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate feature ids")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def _clamp_box(raw: list[float], width: int, height: int, where: str) -> BBox:
    """Validate a raw [xmin, ymin, xmax, ymax] list against the image bounds."""
    if len(raw) != 4:
        raise DataError(f"{where}: bbox must have 4 coordinates, got {len(raw)}")
    try:
        xmin, ymin, xmax, ymax = (float(c) for c in raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: non-numeric bbox coordinate") from exc
    if not all(math.isfinite(c) for c in (xmin, ymin, xmax, ymax)):
        raise DataError(f"{where}: non-finite bbox coordinate")
    if xmin >= xmax or ymin >= ymax:
        raise DataError(f"{where}: degenerate bbox {raw}")
    if (
        xmin < -BOUNDS_TOLERANCE
        or ymin < -BOUNDS_TOLERANCE
        or xmax > width + BOUNDS_TOLERANCE
        or ymax > height + BOUNDS_TOLERANCE
    ):
        raise DataError(f"{where}: bbox {raw} outside image bounds {width}x{height}")
    xmin, xmax = max(xmin, 0.0), min(xmax, float(width))
    ymin, ymax = max(ymin, 0.0), min(ymax, float(height))
    if xmin >= xmax or ymin >= ymax:
        raise DataError(f"{where}: degenerate bbox {raw}")
    return BBox(xmin, ymin, xmax, ymax)


def load_annotations(path: str | Path) -> Dataset:
    """Load a JSON Lines annotation file into a Dataset, preserving file order."""
    path = Path(path)
    images: list[ImageRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        record_index = 0
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: malformed JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise DataError(f"{where}: expected a JSON object")
            image_id = row.get("id")
            if not isinstance(image_id, str) or not image_id:
                raise DataError(f"{where}: missing or empty id")
            if image_id in seen:
                raise DataError(f"{where}: duplicate id {image_id!r}")
            seen.add(image_id)
            width, height = row.get("width"), row.get("height")
            if any(not isinstance(v, int) or isinstance(v, bool) for v in (width, height)):
                raise DataError(f"{where}: width/height must be integers")
            if width <= 0 or height <= 0:
                raise DataError(f"{where}: non-positive image size {width}x{height}")
            seq = row.get("seq", record_index)
            if not isinstance(seq, int) or isinstance(seq, bool):
                raise DataError(f"{where}: seq must be an integer")
            raw_objects = row.get("objects", [])
            if not isinstance(raw_objects, list):
                raise DataError(f"{where}: objects must be a list")
            objects = []
            for obj in raw_objects:
                if not isinstance(obj, dict):
                    raise DataError(f"{where}: each object must be a JSON object")
                cls = obj.get("class")
                if not isinstance(cls, str) or not cls:
                    raise DataError(f"{where}: missing or empty object class")
                bbox = _clamp_box(obj.get("bbox", []), width, height, where)
                objects.append(ObjectLabel(cls, bbox))
            images.append(ImageRecord(image_id, seq, width, height, tuple(objects)))
            record_index += 1
    return Dataset(tuple(images))


def save_annotations(dataset: Dataset, path: str | Path) -> None:
    """Write a Dataset back to the JSON Lines annotation format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for img in dataset.images:
            row = {
                "id": img.id,
                "seq": img.seq,
                "width": img.width,
                "height": img.height,
                "objects": [
                    {
                        "class": o.class_name,
                        "bbox": [o.bbox.xmin, o.bbox.ymin, o.bbox.xmax, o.bbox.ymax],
                    }
                    for o in img.objects
                ],
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_features(path: str | Path) -> FeatureMatrix:
    """Load a feature CSV (header ``id,f0,...``) into a FeatureMatrix, file order."""
    path = Path(path)
    ids: list[str] = []
    rows: list[list[float]] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path.name}: missing header row") from None
        if not header or header[0] != "id":
            raise DataError(f"{path.name}: header must start with 'id'")
        ncols = len(header)
        if ncols < 2:
            raise DataError(f"{path.name}: header declares no feature columns")
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path.name}:{lineno}"
            if len(row) != ncols:
                raise DataError(
                    f"{where}: ragged feature rows ({len(row)} cells, expected {ncols})"
                )
            image_id = row[0]
            if not image_id:
                raise DataError(f"{where}: empty id")
            if image_id in seen:
                raise DataError(f"{where}: duplicate id {image_id!r}")
            seen.add(image_id)
            try:
                values = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise DataError(f"{where}: non-numeric feature cell") from exc
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{where}: non-finite feature value")
            ids.append(image_id)
            rows.append(values)
    vectors = np.asarray(rows, dtype=np.float64)
    if vectors.size == 0:
        vectors = vectors.reshape(0, ncols - 1)
    return FeatureMatrix(tuple(ids), vectors)


def save_features(features: FeatureMatrix, path: str | Path) -> None:
    """Write a FeatureMatrix to the feature CSV format."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{i}" for i in range(features.dim)])
        for image_id, row in zip(features.ids, features.vectors):
            writer.writerow([image_id] + [repr(float(v)) for v in row])


def join_check(dataset: Dataset, features: FeatureMatrix) -> None:
    """Verify that dataset and feature ids are the same set.

    Raises DataError listing up to 10 missing and extra ids on mismatch.
    """
    dataset_ids = set(dataset.ids)
    feature_ids = set(features.ids)
    if dataset_ids == feature_ids:
        return

    def preview(ids: list[str]) -> str:
        if len(ids) > 10:
            return f"{ids[:10]} ... and {len(ids) - 10} more"
        return str(ids)

    missing = sorted(dataset_ids - feature_ids)
    extra = sorted(feature_ids - dataset_ids)
    parts = []
    if missing:
        parts.append(f"ids missing from features: {preview(missing)}")
    if extra:
        parts.append(f"extra feature ids: {preview(extra)}")
    raise DataError("dataset/feature id mismatch; " + "; ".join(parts))
