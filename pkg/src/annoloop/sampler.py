"""Image orderings (similar / dissimilar / random / temporal) and batching.

All ordering happens up front, before any training or simulation.  The
similar and dissimilar strategies grow a query list greedily: the list is
seeded with randomly chosen images, then each step appends the unselected
image whose aggregate distance to the current list is smallest (similar)
or largest (dissimilar).  With min aggregation the dissimilar strategy is
farthest-first traversal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DataError, Dataset
from .distance import DistanceMatrix

STRATEGIES = ("similar", "dissimilar", "random", "temporal")
AGGREGATIONS = ("min", "mean")


@dataclass(frozen=True)
class Ordering:
    """A permutation of all image ids plus the knobs that produced it.

    ``aggregation``, ``rng_seed`` and ``seed_count`` are None for strategies
    that do not use them (random has no aggregation or seeds; temporal has
    neither randomness nor aggregation).
    """

    strategy: str
    aggregation: str | None
    rng_seed: int | None
    seed_count: int | None
    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ordering ids contain duplicates")


@dataclass(frozen=True)
class BatchPlan:
    """Partition of an ordering into contiguous batches B_1..B_n."""

    batches: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if any(len(b) == 0 for b in self.batches):
            raise ValueError("empty batch in plan")

    @property
    def ids(self) -> list[str]:
        return [image_id for batch in self.batches for image_id in batch]


def _greedy_order(
    dm: DistanceMatrix,
    seed_count: int,
    rng_seed: int,
    aggregation: str,
    pick_max: bool,
) -> tuple[str, ...]:
    n = len(dm)
    if n == 0:
        raise DataError("empty distance matrix")
    if not 1 <= seed_count <= n:
        raise ValueError(f"seed_count {seed_count} out of range [1, {n}]")
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")

    rng = np.random.default_rng(rng_seed)
    seeds = [int(i) for i in rng.choice(n, size=seed_count, replace=False)]
    selected = list(seeds)
    taken = np.zeros(n, dtype=bool)
    taken[seeds] = True

    d = dm.d
    # Per-candidate aggregate of distances to the current query list,
    # updated in O(N) after each append.
    if aggregation == "min":
        agg = d[seeds[0]].copy()
        for s in seeds[1:]:
            np.minimum(agg, d[s], out=agg)
    else:
        agg = d[seeds[0]].copy()
        for s in seeds[1:]:
            agg += d[s]

    sentinel = -np.inf if pick_max else np.inf
    for _ in range(n - seed_count):
        scores = np.where(taken, sentinel, agg)
        # argmax/argmin return the first occurrence, i.e. ties go to the
        # smallest original index.
        k = int(np.argmax(scores)) if pick_max else int(np.argmin(scores))
        selected.append(k)
        taken[k] = True
        if aggregation == "min":
            np.minimum(agg, d[k], out=agg)
        else:
            agg += d[k]
    return tuple(dm.ids[i] for i in selected)


def order_dissimilar(
    dm: DistanceMatrix,
    seed_count: int = 1,
    rng_seed: int = 0,
    aggregation: str = "min",
) -> Ordering:
    """Greedy ordering that repeatedly appends the image farthest from the list."""
    ids = _greedy_order(dm, seed_count, rng_seed, aggregation, pick_max=True)
    return Ordering("dissimilar", aggregation, rng_seed, seed_count, ids)


def order_similar(
    dm: DistanceMatrix,
    seed_count: int = 1,
    rng_seed: int = 0,
    aggregation: str = "min",
) -> Ordering:
    """Greedy ordering that repeatedly appends the image nearest to the list."""
    ids = _greedy_order(dm, seed_count, rng_seed, aggregation, pick_max=False)
    return Ordering("similar", aggregation, rng_seed, seed_count, ids)


def order_random(ids: list[str], rng_seed: int = 0) -> Ordering:
    """Uniform random permutation, deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(len(ids))
    return Ordering("random", None, rng_seed, None, tuple(ids[i] for i in perm))


def order_temporal(dataset: Dataset) -> Ordering:
    """Ids sorted by ascending seq, ties broken lexicographically by id."""
    images = sorted(dataset.images, key=lambda img: (img.seq, img.id))
    return Ordering("temporal", None, None, None, tuple(img.id for img in images))


def split_batches(ordering: Ordering, batch_count: int) -> BatchPlan:
    """Split an ordering into batch_count contiguous batches of near-equal size.

    The first N mod n batches hold ceil(N/n) ids, the rest floor(N/n).
    """
    n_ids = len(ordering.ids)
    if not 1 <= batch_count <= n_ids:
        raise ValueError(f"batch_count {batch_count} out of range [1, {n_ids}]")
    base, rem = divmod(n_ids, batch_count)
    batches = []
    start = 0
    for i in range(batch_count):
        size = base + (1 if i < rem else 0)
        batches.append(tuple(ordering.ids[start : start + size]))
        start += size
    return BatchPlan(tuple(batches))


def ordering_to_dict(ordering: Ordering) -> dict:
    return {
        "strategy": ordering.strategy,
        "aggregation": ordering.aggregation,
        "rng_seed": ordering.rng_seed,
        "seed_count": ordering.seed_count,
        "ids": list(ordering.ids),
    }


def save_ordering(ordering: Ordering, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(ordering_to_dict(ordering), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_ordering(path: str | Path) -> Ordering:
    path = Path(path)
    try:
        row = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path.name}: malformed JSON ({exc.msg})") from exc
    try:
        return Ordering(
            strategy=row["strategy"],
            aggregation=row.get("aggregation"),
            rng_seed=row.get("rng_seed"),
            seed_count=row.get("seed_count"),
            ids=tuple(row["ids"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path.name}: invalid ordering file ({exc})") from exc


def save_plan(plan: BatchPlan, path: str | Path, extra: dict | None = None) -> None:
    """Write a BatchPlan as JSON; ``extra`` keys (e.g. a config echo) are merged in."""
    payload = dict(extra or {})
    payload["batches"] = [list(b) for b in plan.batches]
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_plan(path: str | Path) -> BatchPlan:
    path = Path(path)
    try:
        row = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path.name}: malformed JSON ({exc.msg})") from exc
    try:
        return BatchPlan(tuple(tuple(b) for b in row["batches"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path.name}: invalid batch plan file ({exc})") from exc
