"""Tests for the detector oracle, correction counting and the annotation loop."""
from __future__ import annotations

import numpy as np
import pytest

from annoloop import (
    CSV_HEADER,
    DataError,
    DetectorOracle,
    oracle_from_dict,
    oracle_predict,
    order_temporal,
    reduction_percent,
    report_to_csv,
    report_to_dict,
    report_to_json,
    reseeded,
    run_loop,
    simulate_correction,
    split_batches,
    workload_boxes,
    workload_time,
)
from annoloop.sampler import BatchPlan, Ordering
from annoloop.simulate import _poisson_inversion, _stream_seed
from helpers import make_dataset, make_image

CLASSES = ("car", "chair", "person")


def plan_for(dataset, batch_count):
    return split_batches(order_temporal(dataset), batch_count)


class TestOraclePredict:
    def test_perfect_returns_ground_truth(self):
        img = make_image("a", 4)
        preds = oracle_predict(DetectorOracle("perfect"), img, 0.5)
        assert len(preds) == 4
        for p, o in zip(preds, img.objects):
            assert p.class_name == o.class_name and p.bbox == o.bbox and p.score == 1.0

    def test_null_returns_nothing(self):
        img = make_image("a", 4)
        assert oracle_predict(DetectorOracle("null"), img, 0.9) == []

    def test_duplicating_doubles_every_object(self):
        img = make_image("a", 3)
        preds = oracle_predict(DetectorOracle("duplicating"), img, 0.0)
        assert len(preds) == 6
        for k, o in enumerate(img.objects):
            assert preds[2 * k].bbox == o.bbox and preds[2 * k + 1].bbox == o.bbox

    def test_learning_at_fraction_zero_predicts_nothing(self):
        img = make_image("a", 5)
        oracle = DetectorOracle("learning", fp_rate0=0.0, class_names=CLASSES)
        assert oracle_predict(oracle, img, 0.0) == []

    def test_learning_fp_rate_decays_with_fraction(self):
        oracle = DetectorOracle("learning", fp_rate0=4.0, class_names=CLASSES)
        empty = make_image("empty", 0)

        def fp_count(fraction, n=300):
            total = 0
            for k in range(n):
                img = make_image(f"e{k}", 0)
                total += len(oracle_predict(oracle, img, fraction))
            return total / n

        assert empty.objects == ()
        early, late = fp_count(0.0), fp_count(1.0)
        assert early == pytest.approx(4.0, abs=0.4)
        assert late < early / 5.0

    def test_noisy_with_perfect_knobs_reproduces_ground_truth(self):
        img = make_image("a", 4)
        oracle = DetectorOracle(
            "noisy", detect_prob=1.0, jitter=0.0, class_flip_prob=0.0, fp_rate=0.0,
            class_names=CLASSES,
        )
        preds = oracle_predict(oracle, img, 0.0)
        assert len(preds) == 4
        for p, o in zip(preds, img.objects):
            assert p.bbox == o.bbox and p.class_name == o.class_name
            assert 0.5 <= p.score < 1.0

    def test_noisy_detect_prob_zero_emits_only_false_positives(self):
        img = make_image("a", 4)
        oracle = DetectorOracle(
            "noisy", detect_prob=0.0, fp_rate=2.0, class_names=CLASSES, rng_seed=5
        )
        preds = oracle_predict(oracle, img, 0.0)
        for p in preds:
            assert 0.05 <= p.score < 0.5

    def test_class_flip_always_changes_class(self):
        img = make_image("a", 6)
        oracle = DetectorOracle(
            "noisy", detect_prob=1.0, jitter=0.0, class_flip_prob=1.0, fp_rate=0.0,
            class_names=CLASSES,
        )
        preds = oracle_predict(oracle, img, 0.0)
        assert len(preds) == 6
        for p, o in zip(preds, img.objects):
            assert p.class_name != o.class_name
            assert p.class_name in CLASSES

    def test_single_class_dataset_cannot_flip(self):
        img = make_image("a", 3, classes=("car",))
        oracle = DetectorOracle(
            "noisy", detect_prob=1.0, jitter=0.0, class_flip_prob=1.0, fp_rate=0.0,
            class_names=("car",),
        )
        assert all(p.class_name == "car" for p in oracle_predict(oracle, img, 0.0))

    @pytest.mark.parametrize("jitter", [0.05, 0.3, 1.5])
    def test_jittered_boxes_are_always_valid(self, jitter):
        oracle = DetectorOracle(
            "noisy", detect_prob=1.0, jitter=jitter, class_flip_prob=0.0, fp_rate=0.0,
            class_names=CLASSES,
        )
        for k in range(50):
            img = make_image(f"i{k}", 4)
            for p in oracle_predict(oracle, img, 0.0):
                assert p.bbox.xmax > p.bbox.xmin and p.bbox.ymax > p.bbox.ymin

    def test_false_positive_rate_matches_poisson_mean(self):
        oracle = DetectorOracle(
            "noisy", detect_prob=0.0, fp_rate=3.0, class_names=CLASSES, rng_seed=11
        )
        counts = [len(oracle_predict(oracle, make_image(f"i{k}", 0), 0.0)) for k in range(400)]
        assert np.mean(counts) == pytest.approx(3.0, abs=0.3)

    def test_detection_rate_tracks_detect_prob(self):
        hits = {}
        for prob in (0.25, 0.75):
            oracle = DetectorOracle(
                "noisy", detect_prob=prob, jitter=0.0, class_flip_prob=0.0,
                fp_rate=0.0, class_names=CLASSES, rng_seed=13,
            )
            total = sum(len(oracle_predict(oracle, make_image(f"i{k}", 5), 0.0)) for k in range(200))
            hits[prob] = total / 1000.0
        assert hits[0.25] == pytest.approx(0.25, abs=0.05)
        assert hits[0.75] == pytest.approx(0.75, abs=0.05)

    def test_same_image_same_stream_regardless_of_order(self):
        oracle = DetectorOracle("noisy", class_names=CLASSES, rng_seed=3, fp_rate=1.0)
        a, b = make_image("a", 3), make_image("b", 3)
        first = oracle_predict(oracle, a, 0.5)
        oracle_predict(oracle, b, 0.5)
        again = oracle_predict(oracle, a, 0.5)
        assert first == again

    def test_different_ids_use_different_streams(self):
        assert _stream_seed(0, "a") != _stream_seed(0, "b")
        assert _stream_seed(0, "a") != _stream_seed(1, "a")

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown oracle kind"):
            DetectorOracle("psychic")
        with pytest.raises(ValueError, match="detect_prob"):
            DetectorOracle("noisy", detect_prob=1.5, class_names=CLASSES)
        with pytest.raises(ValueError, match="jitter"):
            DetectorOracle("noisy", jitter=-0.1, class_names=CLASSES)
        with pytest.raises(ValueError, match="tau"):
            DetectorOracle("learning", tau=0.0, class_names=CLASSES)
        with pytest.raises(ValueError, match="class names"):
            DetectorOracle("noisy")
        with pytest.raises(ValueError, match="rates"):
            DetectorOracle("noisy", fp_rate=-1.0, class_names=CLASSES)


class TestPoissonInversion:
    def test_lambda_zero_is_always_zero(self):
        rng = np.random.default_rng(0)
        assert all(_poisson_inversion(0.0, rng) == 0 for _ in range(100))

    def test_mean_and_variance_match_poisson(self):
        rng = np.random.default_rng(1)
        draws = np.array([_poisson_inversion(2.5, rng) for _ in range(5000)])
        assert np.mean(draws) == pytest.approx(2.5, abs=0.1)
        assert np.var(draws) == pytest.approx(2.5, abs=0.25)


class TestSimulateCorrection:
    def test_perfect_predictions_need_no_actions(self):
        img = make_image("a", 5)
        preds = oracle_predict(DetectorOracle("perfect"), img, 0.0)
        stats = simulate_correction(preds, list(img.objects), 0.5)
        assert (stats.additions, stats.removals, stats.matched) == (0, 0, 5)

    def test_no_predictions_need_all_additions(self):
        img = make_image("a", 5)
        stats = simulate_correction([], list(img.objects), 0.5)
        assert (stats.additions, stats.removals, stats.matched) == (5, 0, 0)

    def test_duplicates_cost_one_removal_each(self):
        img = make_image("a", 4)
        preds = oracle_predict(DetectorOracle("duplicating"), img, 0.0)
        stats = simulate_correction(preds, list(img.objects), 0.5)
        assert (stats.additions, stats.removals, stats.matched) == (0, 4, 4)


class TestWorkloads:
    def test_boxes_example(self):
        assert workload_boxes(10, 5, 4) == 19

    def test_time_example(self):
        assert workload_time(10, 5, 4, 10.0) == 170.0

    def test_zero_workload(self):
        assert workload_boxes(0, 0, 0) == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            workload_boxes(-1, 0, 0)
        with pytest.raises(ValueError):
            workload_time(1, 0, 0, 0.0)
        with pytest.raises(ValueError):
            workload_time(1, -2, 0, 10.0)

    def test_reduction_examples(self):
        assert reduction_percent(30.0, 300.0) == 90.0
        assert reduction_percent(300.0, 300.0) == 0.0
        assert reduction_percent(450.0, 300.0) == -50.0

    def test_reduction_requires_positive_full_workload(self):
        with pytest.raises(ValueError):
            reduction_percent(1.0, 0.0)


class TestRunLoop:
    def test_perfect_oracle_only_pays_for_first_batch(self):
        ds = make_dataset(100, objects_per_image=3)
        report = run_loop(plan_for(ds, 10), ds, DetectorOracle("perfect"))
        assert report.b1_objects == 30
        assert report.workload_boxes == 30
        assert report.workload_time_s == 300.0
        assert report.reduction_boxes_pct == 90.0
        assert report.reduction_time_pct == 90.0
        assert report.additions_total == 0 and report.removals_total == 0
        assert len(report.rows) == 10

    def test_null_oracle_saves_nothing(self):
        ds = make_dataset(100, objects_per_image=3)
        report = run_loop(plan_for(ds, 10), ds, DetectorOracle("null"))
        assert report.workload_boxes == ds.total_objects
        assert report.reduction_boxes_pct == 0.0
        assert report.reduction_time_pct == 0.0
        assert report.additions_total == 270

    def test_duplicating_oracle_pays_half_per_removal(self):
        ds = make_dataset(100, objects_per_image=3)
        report = run_loop(plan_for(ds, 10), ds, DetectorOracle("duplicating"))
        assert report.additions_total == 0
        assert report.removals_total == 270
        assert report.workload_boxes == 300
        assert report.workload_time_s == 30 * 10.0 + 270 * 5.0
        assert report.reduction_boxes_pct == 0.0
        assert report.reduction_time_pct == pytest.approx(45.0)

    def test_single_batch_is_fully_manual(self):
        ds = make_dataset(10, objects_per_image=2)
        report = run_loop(plan_for(ds, 1), ds, DetectorOracle("perfect"))
        assert len(report.rows) == 1
        assert report.workload_boxes == 20
        assert report.reduction_boxes_pct == 0.0

    def test_row_conservation_invariants(self):
        ds = make_dataset(40, objects_per_image=3)
        oracle = DetectorOracle(
            "noisy", detect_prob=0.6, jitter=0.1, class_flip_prob=0.1, fp_rate=0.5,
            class_names=CLASSES, rng_seed=2,
        )
        report = run_loop(plan_for(ds, 8), ds, oracle)
        first = report.rows[0]
        assert first.predictions == 0 and first.matched == 0
        assert first.additions == 0 and first.removals == 0
        for row in report.rows[1:]:
            assert row.matched + row.additions == row.gt_objects
            assert row.matched + row.removals == row.predictions
        assert report.rows[-1].labeled_objects_cum == ds.total_objects

    def test_totals_match_rows_exactly(self):
        ds = make_dataset(30, objects_per_image=2)
        oracle = DetectorOracle(
            "learning", fp_rate0=2.0, class_names=CLASSES, rng_seed=7
        )
        report = run_loop(plan_for(ds, 6), ds, oracle)
        assert report.additions_total == sum(r.additions for r in report.rows)
        assert report.removals_total == sum(r.removals for r in report.rows)
        last = report.rows[-1]
        assert last.wb_cum == report.workload_boxes
        assert last.wt_cum_s == report.workload_time_s
        assert report.workload_boxes == workload_boxes(
            report.b1_objects, report.additions_total, report.removals_total
        )

    def test_image_order_inside_batches_does_not_matter(self):
        ds = make_dataset(24, objects_per_image=3)
        oracle = DetectorOracle(
            "noisy", detect_prob=0.5, jitter=0.1, fp_rate=1.0, class_names=CLASSES,
            rng_seed=3,
        )
        plan = plan_for(ds, 4)
        flipped = BatchPlan(tuple(tuple(reversed(b)) for b in plan.batches))
        r1 = run_loop(plan, ds, oracle)
        r2 = run_loop(flipped, ds, oracle)
        for a, b in zip(r1.rows, r2.rows):
            assert (a.additions, a.removals, a.matched) == (b.additions, b.removals, b.matched)
        assert r1.workload_boxes == r2.workload_boxes

    def test_workload_decreases_as_detect_prob_rises(self):
        ds = make_dataset(40, objects_per_image=3)
        plan = plan_for(ds, 8)
        means = {}
        for prob in (0.0, 0.5, 1.0):
            wbs = []
            for seed in range(20):
                oracle = DetectorOracle(
                    "noisy", detect_prob=prob, jitter=0.0, class_flip_prob=0.0,
                    fp_rate=0.0, class_names=CLASSES, rng_seed=seed,
                )
                wbs.append(run_loop(plan, ds, oracle).workload_boxes)
            means[prob] = float(np.mean(wbs))
        assert means[1.0] < means[0.5] < means[0.0]

    def test_huge_jitter_forces_removals_and_additions(self):
        ds = make_dataset(20, objects_per_image=3)
        oracle = DetectorOracle(
            "noisy", detect_prob=1.0, jitter=1.5, class_flip_prob=0.0, fp_rate=0.0,
            class_names=CLASSES, rng_seed=1,
        )
        report = run_loop(plan_for(ds, 4), ds, oracle)
        assert report.removals_total > 0
        assert report.additions_total > 0
        # every unmatched proposal must be paired with a re-drawn gt box
        assert report.additions_total == report.removals_total

    def test_extreme_jitter_degenerates_to_full_relabeling(self):
        # with jitter this large every proposed box misses its target at any
        # usable threshold, so each later batch costs its full gt count in
        # additions plus one removal per proposal
        ds = make_dataset(18, objects_per_image=3)
        oracle = DetectorOracle(
            "noisy", detect_prob=1.0, jitter=50.0, class_flip_prob=0.0,
            fp_rate=0.0, class_names=CLASSES, rng_seed=3,
        )
        report = run_loop(plan_for(ds, 6), ds, oracle, threshold=0.5)
        later = report.rows[1:]
        assert all(row.matched == 0 for row in later)
        assert report.additions_total == sum(row.gt_objects for row in later)
        assert report.removals_total == sum(row.predictions for row in later)
        expected_wb = report.b1_objects + report.additions_total + report.removals_total
        assert report.workload_boxes == expected_wb

    def test_determinism_byte_identical_json(self):
        ds = make_dataset(25, objects_per_image=2)
        oracle = DetectorOracle(
            "learning", fp_rate0=1.0, class_names=CLASSES, rng_seed=9
        )
        r1 = run_loop(plan_for(ds, 5), ds, oracle)
        r2 = run_loop(plan_for(ds, 5), ds, oracle)
        assert r1 == r2
        assert report_to_json(r1) == report_to_json(r2)
        assert report_to_csv(r1) == report_to_csv(r2)

    def test_plan_must_cover_dataset(self):
        ds = make_dataset(10)
        partial = BatchPlan((tuple(ds.ids[:5]),))
        with pytest.raises(DataError, match="cover"):
            run_loop(partial, ds, DetectorOracle("perfect"))

    def test_zero_object_dataset_rejected(self):
        ds = make_dataset(5, objects_per_image=0)
        with pytest.raises(DataError, match="no objects"):
            run_loop(plan_for(ds, 2), ds, DetectorOracle("perfect"))

    def test_threshold_and_time_validation(self):
        ds = make_dataset(4)
        plan = plan_for(ds, 2)
        with pytest.raises(ValueError):
            run_loop(plan, ds, DetectorOracle("perfect"), threshold=1.0)
        with pytest.raises(ValueError):
            run_loop(plan, ds, DetectorOracle("perfect"), time_per_box_s=0.0)


class TestSerialization:
    def test_csv_shape(self):
        ds = make_dataset(12, objects_per_image=2)
        report = run_loop(plan_for(ds, 3), ds, DetectorOracle("perfect"))
        lines = report_to_csv(report).splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 4
        assert lines[1].startswith("1,4,8,0,0,0,0,8,8,")

    def test_report_dict_echoes_ordering_without_ids(self):
        ds = make_dataset(6, objects_per_image=1)
        ordering = order_temporal(ds)
        report = run_loop(
            split_batches(ordering, 2), ds, DetectorOracle("perfect"), ordering=ordering
        )
        echo = report_to_dict(report)["config"]["ordering"]
        assert echo == {
            "strategy": "temporal",
            "aggregation": None,
            "rng_seed": None,
            "seed_count": None,
        }

    def test_report_dict_without_ordering(self):
        ds = make_dataset(6, objects_per_image=1)
        report = run_loop(plan_for(ds, 2), ds, DetectorOracle("perfect"))
        payload = report_to_dict(report)
        assert payload["config"]["ordering"] is None
        assert payload["totals"]["workload_boxes"] == report.workload_boxes

    def test_oracle_round_trip_from_dict(self):
        descriptor = {"kind": "noisy", "detect_prob": 0.7, "jitter": 0.1}
        oracle = oracle_from_dict(descriptor, CLASSES, rng_seed=4)
        assert oracle.kind == "noisy"
        assert oracle.detect_prob == 0.7
        assert oracle.rng_seed == 4 and oracle.class_names == CLASSES

    def test_oracle_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown oracle parameter"):
            oracle_from_dict({"kind": "noisy", "strength": 3}, CLASSES, 0)
        with pytest.raises(ValueError, match="unknown oracle kind"):
            oracle_from_dict({"kind": "psychic"}, CLASSES, 0)

    def test_oracle_from_dict_ignores_descriptor_seed(self):
        oracle = oracle_from_dict({"kind": "perfect", "rng_seed": 99}, (), rng_seed=1)
        assert oracle.rng_seed == 1

    def test_reseeded_changes_only_the_seed(self):
        oracle = DetectorOracle("noisy", detect_prob=0.4, class_names=CLASSES, rng_seed=0)
        other = reseeded(oracle, 7)
        assert other.rng_seed == 7
        assert other.detect_prob == 0.4 and other.kind == "noisy"
