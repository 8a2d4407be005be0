"""Distance-based image ordering and annotation-workload simulation."""

from .core import (
    BBox,
    Dataset,
    DataError,
    FeatureMatrix,
    ImageRecord,
    ObjectLabel,
    join_check,
    load_annotations,
    load_features,
    save_annotations,
    save_features,
)
from .distance import DistanceMatrix, load_cache, pairwise_euclidean, save_cache
from .evaluation import (
    MatchResult,
    Prediction,
    average_precision,
    iou,
    load_predictions,
    match_greedy,
    mean_average_precision,
    per_class_ap,
)
from .sampler import (
    BatchPlan,
    Ordering,
    load_ordering,
    ordering_to_dict,
    load_plan,
    order_dissimilar,
    order_random,
    order_similar,
    order_temporal,
    save_ordering,
    save_plan,
    split_batches,
)
from .simulate import (
    CSV_HEADER,
    CorrectionStats,
    DetectorOracle,
    IterationRow,
    LoopReport,
    oracle_from_dict,
    oracle_predict,
    oracle_to_dict,
    reduction_percent,
    report_to_csv,
    report_to_dict,
    report_to_json,
    reseeded,
    run_loop,
    simulate_correction,
    workload_boxes,
    workload_time,
)

__version__ = "0.1.0"

__all__ = [
    "average_precision",
    "BatchPlan",
    "BBox",
    "CorrectionStats",
    "CSV_HEADER",
    "DataError",
    "Dataset",
    "DetectorOracle",
    "DistanceMatrix",
    "FeatureMatrix",
    "ImageRecord",
    "iou",
    "IterationRow",
    "join_check",
    "load_annotations",
    "load_cache",
    "load_features",
    "load_ordering",
    "load_plan",
    "load_predictions",
    "LoopReport",
    "match_greedy",
    "MatchResult",
    "mean_average_precision",
    "ObjectLabel",
    "oracle_from_dict",
    "oracle_predict",
    "oracle_to_dict",
    "order_dissimilar",
    "order_random",
    "order_similar",
    "order_temporal",
    "Ordering",
    "ordering_to_dict",
    "pairwise_euclidean",
    "per_class_ap",
    "Prediction",
    "reduction_percent",
    "report_to_csv",
    "report_to_dict",
    "report_to_json",
    "reseeded",
    "run_loop",
    "save_annotations",
    "save_cache",
    "save_features",
    "save_ordering",
    "save_plan",
    "simulate_correction",
    "split_batches",
    "workload_boxes",
    "workload_time",
]
