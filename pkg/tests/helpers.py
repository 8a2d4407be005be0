"""Shared builders for synthetic datasets, features and files used by the tests."""
from __future__ import annotations

import numpy as np

from annoloop import (
    BBox,
    Dataset,
    FeatureMatrix,
    ImageRecord,
    ObjectLabel,
    Prediction,
    save_annotations,
    save_features,
)

CLASSES = ("car", "person", "chair")


def random_box(rng: np.random.Generator, hi: float = 100.0) -> BBox:
    x0 = rng.uniform(0, hi - 12)
    y0 = rng.uniform(0, hi - 12)
    w = rng.uniform(8, 40)
    h = rng.uniform(8, 40)
    return BBox(x0, y0, min(x0 + w, hi), min(y0 + h, hi))


def random_instance(
    rng: np.random.Generator,
    classes: tuple[str, ...] = ("car", "person"),
    max_boxes: int = 6,
) -> tuple[list[Prediction], list[ObjectLabel]]:
    """Random prediction/ground-truth pair for matching tests."""
    preds = [
        Prediction(classes[int(rng.integers(0, len(classes)))], random_box(rng), float(rng.uniform(0, 1)))
        for _ in range(int(rng.integers(0, max_boxes + 1)))
    ]
    gt = [
        ObjectLabel(classes[int(rng.integers(0, len(classes)))], random_box(rng))
        for _ in range(int(rng.integers(0, max_boxes + 1)))
    ]
    return preds, gt


def make_image(
    image_id: str,
    n_objects: int,
    seq: int = 0,
    width: int = 640,
    height: int = 480,
    classes: tuple[str, ...] = CLASSES,
) -> ImageRecord:
    """Build an image with ``n_objects`` non-overlapping boxes on a fixed grid."""
    objects = []
    for k in range(n_objects):
        x0 = 10.0 + 70.0 * (k % 8)
        y0 = 10.0 + 70.0 * (k // 8)
        # grid must stay inside the canvas
        assert x0 + 50.0 <= width and y0 + 40.0 <= height
        objects.append(ObjectLabel(classes[k % len(classes)], BBox(x0, y0, x0 + 50.0, y0 + 40.0)))
    return ImageRecord(image_id, seq, width, height, tuple(objects))


def make_dataset(
    n_images: int,
    objects_per_image: int = 3,
    classes: tuple[str, ...] = CLASSES,
) -> Dataset:
    images = [
        make_image(f"img{i:04d}", objects_per_image, seq=i, classes=classes)
        for i in range(n_images)
    ]
    return Dataset(tuple(images))


def random_dataset(rng: np.random.Generator, n_images: int, max_objects: int = 5) -> Dataset:
    """Dataset whose per-image object counts vary randomly (possibly zero)."""
    images = []
    for i in range(n_images):
        n = int(rng.integers(0, max_objects + 1))
        images.append(make_image(f"img{i:04d}", n, seq=i))
    return Dataset(tuple(images))


def random_features(rng: np.random.Generator, ids: tuple[str, ...], dim: int = 3) -> FeatureMatrix:
    return FeatureMatrix(tuple(ids), rng.normal(size=(len(ids), dim)))


def write_dataset(dataset: Dataset, path) -> str:
    save_annotations(dataset, str(path))
    return str(path)


def write_feature_csv(features: FeatureMatrix, path) -> str:
    save_features(features, str(path))
    return str(path)


def two_cluster_dataset(
    n_sparse: int = 150,
    n_dense: int = 50,
    sparse_objects: int = 1,
    dense_objects: int = 9,
) -> tuple[Dataset, FeatureMatrix]:
    """Two feature clusters with unequal annotation densities.

    Cluster A holds ``n_sparse`` images with ``sparse_objects`` boxes each and
    cluster B holds ``n_dense`` images with ``dense_objects`` boxes each.  The
    clusters are far apart in feature space, so similarity-first orderings stay
    inside the seed's cluster while diversity-first orderings alternate.
    """
    rng = np.random.default_rng(1234)
    images = []
    rows = []
    ids = []
    seq = 0
    for i in range(n_sparse):
        image_id = f"a{i:04d}"
        images.append(make_image(image_id, sparse_objects, seq=seq))
        rows.append(rng.normal(0.0, 1.0, size=4))
        ids.append(image_id)
        seq += 1
    for i in range(n_dense):
        image_id = f"b{i:04d}"
        images.append(make_image(image_id, dense_objects, seq=seq))
        rows.append(rng.normal(0.0, 1.0, size=4) + np.array([60.0, 0.0, 0.0, 0.0]))
        ids.append(image_id)
        seq += 1
    return Dataset(tuple(images)), FeatureMatrix(tuple(ids), np.asarray(rows))
