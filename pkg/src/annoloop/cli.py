"""Command-line entry point: order, simulate, eval and curve subcommands.

A JSON config file given with --config supplies any of the keys mirrored by
the flags (lower_snake_case); explicit flags override the file.  Exit codes:
0 success, 2 configuration error, 3 data error.  ANNOLOOP_THREADS caps the
worker count for replicate runs (0 or unset = auto).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import DataError, Dataset, FeatureMatrix, join_check, load_annotations, load_features
from .distance import DistanceMatrix, pairwise_euclidean
from .evaluation import load_predictions, mean_average_precision, per_class_ap
from .sampler import (
    AGGREGATIONS,
    STRATEGIES,
    BatchPlan,
    Ordering,
    load_ordering,
    load_plan,
    order_dissimilar,
    order_random,
    order_similar,
    order_temporal,
    ordering_to_dict,
    save_ordering,
    save_plan,
    split_batches,
)
from .simulate import (
    LoopReport,
    oracle_from_dict,
    oracle_predict,
    report_to_csv,
    report_to_json,
    run_loop,
)

DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class ConfigError(Exception):
    """Raised for invalid configuration values or combinations."""


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce an experiment run."""

    annotations: str | None = None
    features: str | None = None
    output_dir: str = "out"
    strategy: tuple[str, ...] = ("dissimilar",)
    aggregation: str = "min"
    seed_count: int = 1
    rng_seed: int = 0
    batch_count: int = 10
    iou_threshold: float = 0.5
    time_per_box_s: float = 10.0
    normalize_features: bool = False
    oracle: dict = field(default_factory=lambda: {"kind": "learning"})
    replicates: int = 1
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS

    def validate(self) -> None:
        if self.annotations is None:
            raise ConfigError("annotations path is required")
        for s in self.strategy:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        if len(set(self.strategy)) != len(self.strategy):
            raise ConfigError("duplicate strategies")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        if self.seed_count < 1:
            raise ConfigError("seed_count must be >= 1")
        if self.batch_count < 1:
            raise ConfigError("batch_count must be >= 1")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ConfigError("iou_threshold must be in (0, 1)")
        if self.time_per_box_s <= 0:
            raise ConfigError("time_per_box_s must be > 0")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not isinstance(self.oracle, dict) or "kind" not in self.oracle:
            raise ConfigError("oracle descriptor must be an object with a 'kind'")
        if list(self.fractions) != sorted(set(self.fractions)):
            raise ConfigError("fractions must be strictly ascending")
        if any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise ConfigError("fractions must lie in (0, 1]")

    def echo(self) -> dict:
        return {
            "annotations": self.annotations,
            "features": self.features,
            "output_dir": self.output_dir,
            "strategy": list(self.strategy),
            "aggregation": self.aggregation,
            "seed_count": self.seed_count,
            "rng_seed": self.rng_seed,
            "batch_count": self.batch_count,
            "iou_threshold": self.iou_threshold,
            "time_per_box_s": self.time_per_box_s,
            "normalize_features": self.normalize_features,
            "oracle": self.oracle,
            "replicates": self.replicates,
            "fractions": list(self.fractions),
        }


def _as_strategy_tuple(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return tuple(value)


def _as_fraction_tuple(value) -> tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(part) for part in value.split(",") if part.strip())
    return tuple(float(v) for v in value)


def build_config(config_path: str | None, overrides: dict) -> RunConfig:
    """Merge defaults, config file, then explicit flag overrides."""
    merged: dict = {}
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(raw)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "strategy" in merged:
        merged["strategy"] = _as_strategy_tuple(merged["strategy"])
    if "fractions" in merged:
        merged["fractions"] = _as_fraction_tuple(merged["fractions"])
    if "oracle" in merged and isinstance(merged["oracle"], str):
        try:
            merged["oracle"] = json.loads(merged["oracle"])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--oracle is not valid JSON: {exc.msg}") from exc
    try:
        config = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def worker_cap() -> int:
    """Worker count from ANNOLOOP_THREADS; 0 or unset means auto."""
    raw = os.environ.get("ANNOLOOP_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"ANNOLOOP_THREADS must be an integer, got {raw!r}") from exc
    if value < 0:
        raise ConfigError("ANNOLOOP_THREADS must be >= 0")
    return value if value > 0 else (os.cpu_count() or 1)


def _write_atomic(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _load_inputs(config: RunConfig) -> tuple[Dataset, FeatureMatrix | None]:
    dataset = load_annotations(config.annotations)
    features = None
    if config.features:
        features = load_features(config.features)
        join_check(dataset, features)
    return dataset, features


def _make_ordering(
    strategy: str,
    config: RunConfig,
    dataset: Dataset,
    dm: DistanceMatrix | None,
) -> Ordering:
    if strategy == "dissimilar":
        assert dm is not None
        return order_dissimilar(dm, config.seed_count, config.rng_seed, config.aggregation)
    if strategy == "similar":
        assert dm is not None
        return order_similar(dm, config.seed_count, config.rng_seed, config.aggregation)
    if strategy == "random":
        return order_random(dataset.ids, config.rng_seed)
    return order_temporal(dataset)


def _distance_matrix_if_needed(
    config: RunConfig, features: FeatureMatrix | None
) -> DistanceMatrix | None:
    if not any(s in ("similar", "dissimilar") for s in config.strategy):
        return None
    if features is None:
        # not checked in RunConfig.validate: reusing a plan or ordering file
        # runs similar/dissimilar labels without the features CSV
        raise ConfigError("similar/dissimilar strategies require a features path")
    return pairwise_euclidean(features, normalize=config.normalize_features)


def cmd_order(config: RunConfig) -> int:
    dataset, features = _load_inputs(config)
    dm = _distance_matrix_if_needed(config, features)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for strategy in config.strategy:
        ordering = _make_ordering(strategy, config, dataset, dm)
        plan = split_batches(ordering, config.batch_count)
        save_ordering(ordering, out / f"ordering_{strategy}.json")
        save_plan(
            plan,
            out / f"batch_plan_{strategy}.json",
            extra={"batch_count": config.batch_count, "config": config.echo()},
        )
        dim = features.dim if features is not None else None
        print(
            f"order: strategy={strategy} images={len(ordering.ids)} "
            f"feature_dim={dim if dim is not None else '-'} "
            f"batches={config.batch_count} rng_seed={config.rng_seed}"
        )
    return 0


def _simulate_one_strategy(
    strategy: str,
    config: RunConfig,
    dataset: Dataset,
    plan: BatchPlan,
    ordering: Ordering | None,
    out: Path,
) -> dict:
    class_names = tuple(sorted(dataset.class_set))

    def one(replicate: int) -> LoopReport:
        oracle = oracle_from_dict(config.oracle, class_names, config.rng_seed + replicate)
        return run_loop(
            plan,
            dataset,
            oracle,
            threshold=config.iou_threshold,
            time_per_box_s=config.time_per_box_s,
            ordering=ordering,
        )

    cap = min(worker_cap(), config.replicates)
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            reports = list(pool.map(one, range(config.replicates)))
    else:
        reports = [one(k) for k in range(config.replicates)]

    file_names = []
    for k, report in enumerate(reports):
        stem = f"report_{strategy}_r{k}"
        _write_atomic(out / f"{stem}.json", report_to_json(report))
        _write_atomic(out / f"{stem}.csv", report_to_csv(report))
        file_names.append(f"{stem}.json")

    red_b = [r.reduction_boxes_pct for r in reports]
    red_t = [r.reduction_time_pct for r in reports]
    return {
        "strategy": strategy,
        "aggregation": config.aggregation if strategy in ("similar", "dissimilar") else None,
        "replicates": config.replicates,
        "reduction_boxes_pct": {"mean": _mean(red_b), "sd": _sample_sd(red_b)},
        "reduction_time_pct": {"mean": _mean(red_t), "sd": _sample_sd(red_t)},
        "reports": file_names,
    }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _sample_sd(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


def cmd_simulate(
    config: RunConfig,
    plan_path: str | None = None,
    ordering_path: str | None = None,
) -> int:
    dataset, features = _load_inputs(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    per_strategy: list[tuple[str, BatchPlan, Ordering | None]] = []
    if plan_path:
        if len(config.strategy) != 1:
            raise ConfigError("--plan accepts exactly one strategy label")
        per_strategy.append((config.strategy[0], load_plan(plan_path), None))
    elif ordering_path:
        if len(config.strategy) != 1:
            raise ConfigError("--ordering accepts exactly one strategy label")
        ordering = load_ordering(ordering_path)
        per_strategy.append(
            (config.strategy[0], split_batches(ordering, config.batch_count), ordering)
        )
    else:
        dm = _distance_matrix_if_needed(config, features)
        for strategy in config.strategy:
            ordering = _make_ordering(strategy, config, dataset, dm)
            per_strategy.append((strategy, split_batches(ordering, config.batch_count), ordering))

    summary_rows = []
    for strategy, plan, ordering in per_strategy:
        row = _simulate_one_strategy(strategy, config, dataset, plan, ordering, out)
        summary_rows.append(row)
        print(
            f"simulate: strategy={strategy} replicates={config.replicates} "
            f"reduction_boxes_pct={row['reduction_boxes_pct']['mean']:.2f} "
            f"reduction_time_pct={row['reduction_time_pct']['mean']:.2f}"
        )
    summary = {"config": config.echo(), "strategies": summary_rows}
    _write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_eval(
    predictions_path: str, annotations_path: str, threshold: float, output: str | None = None
) -> int:
    if not 0.0 < threshold < 1.0:
        raise ConfigError("iou_threshold must be in (0, 1)")
    dataset = load_annotations(annotations_path)
    preds_by_image = load_predictions(predictions_path)
    known = set(dataset.ids)
    unknown = sorted(set(preds_by_image) - known)
    if unknown:
        raise DataError(f"prediction ids not present in annotations: {unknown[:10]}")
    gt_by_image = {img.id: list(img.objects) for img in dataset.images}
    aps = per_class_ap(preds_by_image, gt_by_image, threshold)
    if not aps:
        raise DataError("no class has ground-truth instances")
    result = {
        "iou_threshold": threshold,
        "per_class_ap": aps,
        "map": sum(aps.values()) / len(aps),
    }
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if output:
        _write_atomic(Path(output), text)
    return 0


def cmd_curve(config: RunConfig) -> int:
    dataset, features = _load_inputs(config)
    dm = _distance_matrix_if_needed(config, features)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    class_names = tuple(sorted(dataset.class_set))
    total_objects = dataset.total_objects
    if total_objects == 0:
        raise DataError("dataset has no objects")

    rows = []
    for strategy in config.strategy:
        ordering = _make_ordering(strategy, config, dataset, dm)
        n = len(ordering.ids)
        for fraction in config.fractions:
            prefix_len = min(n, max(1, math.ceil(fraction * n)))
            prefix = ordering.ids[:prefix_len]
            heldout = ordering.ids[prefix_len:]
            labeled_objects = sum(len(dataset.by_id(i).objects) for i in prefix)
            labeled_fraction = labeled_objects / total_objects
            row = {
                "strategy": strategy,
                "fraction": fraction,
                "prefix_images": prefix_len,
                "labeled_object_fraction": labeled_fraction,
                "n_seeds": config.replicates,
            }
            gt_by_image = {i: list(dataset.by_id(i).objects) for i in heldout}
            heldout_has_gt = any(gt_by_image.values())
            if not heldout or not heldout_has_gt:
                row.update({"map_mean": None, "map_sd": None})
                rows.append(row)
                continue
            maps = []
            for k in range(config.replicates):
                oracle = oracle_from_dict(config.oracle, class_names, config.rng_seed + k)
                preds_by_image = {
                    i: oracle_predict(oracle, dataset.by_id(i), labeled_fraction)
                    for i in heldout
                }
                maps.append(
                    mean_average_precision(preds_by_image, gt_by_image, config.iou_threshold)
                )
            row.update({"map_mean": _mean(maps), "map_sd": _sample_sd(maps)})
            rows.append(row)

    curve = {"config": config.echo(), "rows": rows}
    _write_atomic(out / "curve.json", json.dumps(curve, indent=2, sort_keys=True) + "\n")
    for row in rows:
        mean_text = "null" if row["map_mean"] is None else f"{row['map_mean']:.4f}"
        print(f"curve: strategy={row['strategy']} fraction={row['fraction']} map={mean_text}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser, with_oracle: bool = False) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--annotations", help="annotation JSONL path")
    parser.add_argument("--features", help="feature CSV path")
    parser.add_argument("--output-dir", dest="output_dir", help="output directory")
    parser.add_argument("--strategy", help="comma-separated strategies")
    parser.add_argument("--aggregation", choices=AGGREGATIONS)
    parser.add_argument("--seed-count", dest="seed_count", type=int)
    parser.add_argument("--rng-seed", dest="rng_seed", type=int)
    parser.add_argument("--batch-count", dest="batch_count", type=int)
    parser.add_argument(
        "--normalize-features",
        dest="normalize_features",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    if with_oracle:
        parser.add_argument("--iou-threshold", dest="iou_threshold", type=float)
        parser.add_argument("--time-per-box", dest="time_per_box_s", type=float)
        parser.add_argument("--replicates", type=int)
        parser.add_argument("--oracle", help="oracle descriptor as JSON")


_CONFIG_KEYS = (
    "annotations",
    "features",
    "output_dir",
    "strategy",
    "aggregation",
    "seed_count",
    "rng_seed",
    "batch_count",
    "normalize_features",
    "iou_threshold",
    "time_per_box_s",
    "replicates",
    "oracle",
    "fractions",
)


def _overrides_from_args(args: argparse.Namespace) -> dict:
    return {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annoloop",
        description="Distance-based image ordering and annotation-workload simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_order = sub.add_parser("order", help="write ordering and batch plan files")
    _add_config_flags(p_order)

    p_sim = sub.add_parser("simulate", help="run the train-annotate loop simulation")
    _add_config_flags(p_sim, with_oracle=True)
    p_sim.add_argument("--plan", help="existing batch plan JSON to reuse")
    p_sim.add_argument("--ordering", help="existing ordering JSON to split and run")

    p_eval = sub.add_parser("eval", help="score a prediction file against annotations")
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--annotations", required=True)
    p_eval.add_argument("--iou-threshold", dest="iou_threshold", type=float, default=0.5)
    p_eval.add_argument("--output", help="also write the JSON report here")

    p_curve = sub.add_parser("curve", help="labeled-fraction vs mAP curve")
    _add_config_flags(p_curve, with_oracle=True)
    p_curve.add_argument("--fractions", help="comma-separated ascending fractions in (0,1]")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args.predictions, args.annotations, args.iou_threshold, args.output)
        config = build_config(args.config, _overrides_from_args(args))
        if args.command == "order":
            return cmd_order(config)
        if args.command == "simulate":
            return cmd_simulate(config, plan_path=args.plan, ordering_path=args.ordering)
        return cmd_curve(config)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
