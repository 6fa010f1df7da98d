"""
Tests for detector dumps, label diffing, AP/AR and attack comparison.
"""

import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detblind.common.errors import DomainError, ValidationError
from detblind.evaluation import (
    AttackedTarget,
    DetectionSet,
    align_image_spaces,
    compare_attacks,
    compute_ap,
    compute_map,
    count_bboxes,
    diff_labels,
    iou,
    iou_matrix,
    parse_detections,
    relative_drop,
    serialize_detections,
    target_suppression,
)
from detblind.segmentation import GroundTruthBox, ground_truth_boxes, load_coco_document

GRID_BOXES = [(float(10 * (k % 3)), float(10 * (k // 3)), 8.0, 8.0) for k in range(9)]


@pytest.fixture
def fixture_ground_truth(coco_bytes):
    return ground_truth_boxes(load_coco_document(coco_bytes))


def detections_from(factory, records):
    return parse_detections(factory.dump(records))


def brute_force_churn(origin_records, adv_records, threshold):
    new = disappeared = 0
    images = {r["image_id"] for r in origin_records} | {r["image_id"] for r in adv_records}
    for image_id in images:
        before = Counter(r["category_id"] for r in origin_records if r["image_id"] == image_id and r["score"] >= threshold)
        after = Counter(r["category_id"] for r in adv_records if r["image_id"] == image_id and r["score"] >= threshold)
        for category in set(before) | set(after):
            new += max(0, after[category] - before[category])
            disappeared += max(0, before[category] - after[category])
    return new, disappeared


@pytest.mark.unit
class TestParseDetections:
    """Results-format parsing and validation."""

    def test_empty_dump(self):
        detections = parse_detections(b"[]")
        assert len(detections) == 0
        assert detections.image_ids() == []

    def test_fixture_dump(self, detections_bytes):
        detections = parse_detections(detections_bytes)
        assert len(detections) == 3
        assert detections.image_ids() == [1, 2]
        assert detections.categories() == [1, 3, 18]
        assert [d.category_id for d in detections.for_image(2)] == [3, 18]
        assert [d.category_id for d in detections.for_image(2, threshold=0.3)] == [3]

    def test_negative_width(self, test_data_factory):
        records = [test_data_factory.detection(), test_data_factory.detection(bbox=[0, 0, -1, 5])]
        with pytest.raises(ValidationError) as exc:
            detections_from(test_data_factory, records)
        assert exc.value.offending == [1]

    @pytest.mark.parametrize("coordinate", ["NaN", "Infinity", "-Infinity"])
    def test_non_finite_coordinates(self, coordinate):
        dump = (
            '[{"image_id": 1, "category_id": 1, "bbox": [0, 0, 4, 4], "score": 0.5},'
            f' {{"image_id": 1, "category_id": 1, "bbox": [{coordinate}, 0, 4, 4], "score": 0.5}},'
            f' {{"image_id": 1, "category_id": 1, "bbox": [0, 0, 4, {coordinate}], "score": 0.5}}]'
        )
        with pytest.raises(ValidationError) as exc:
            parse_detections(dump.encode())
        assert exc.value.offending == [1, 2]

    def test_every_bad_record_is_reported(self, test_data_factory):
        records = [
            test_data_factory.detection(score=1.5),
            test_data_factory.detection(),
            {"image_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5},
        ]
        with pytest.raises(ValidationError) as exc:
            detections_from(test_data_factory, records)
        assert exc.value.offending == [0, 2]

    def test_not_an_array(self):
        with pytest.raises(ValidationError):
            parse_detections(b'{"image_id": 1}')

    def test_malformed_json(self):
        with pytest.raises(ValidationError, match="Malformed JSON"):
            parse_detections(b"[{")

    def test_serialize_round_trip(self, detections_bytes):
        detections = parse_detections(detections_bytes)
        again = parse_detections(serialize_detections(detections))
        assert list(again) == list(detections)

    def test_count_bboxes(self, detections_bytes):
        detections = parse_detections(detections_bytes)
        assert count_bboxes(detections) == 2
        assert count_bboxes(detections, threshold=0.0) == 3
        assert count_bboxes(detections, threshold=0.9) == 1
        with pytest.raises(DomainError):
            count_bboxes(detections, threshold=1.5)

    def test_orphan_images(self, test_data_factory):
        origin = detections_from(test_data_factory, [test_data_factory.detection(image_id=i) for i in (1, 2)])
        adversarial = detections_from(test_data_factory, [test_data_factory.detection(image_id=i) for i in (2, 3)])
        aligned_origin, aligned_adv, orphans = align_image_spaces(origin, adversarial)
        assert orphans == [1, 3]
        assert aligned_origin.image_ids() == aligned_adv.image_ids() == [2]
        _, _, orphans = align_image_spaces(origin, adversarial, known=[1])
        assert orphans == [3]


@pytest.mark.unit
class TestDiffLabels:
    """Per-image category multiset differences."""

    def test_identical_dumps(self, detections_bytes):
        detections = parse_detections(detections_bytes)
        report = diff_labels(detections, detections)
        assert report.new_labels == report.disappeared_labels == 0
        assert report.bbox_count_origin == report.bbox_count_adv == 2

    def test_swapped_labels(self, test_data_factory):
        d = test_data_factory.detection
        origin = detections_from(test_data_factory, [d(category_id=1), d(category_id=1), d(category_id=2)])
        adversarial = detections_from(test_data_factory, [d(category_id=1), d(category_id=3), d(category_id=3)])
        report = diff_labels(origin, adversarial)
        assert report.new_labels == 2
        assert report.disappeared_labels == 2
        assert report.per_image[0].image_id == 1

    def test_low_scores_are_ignored(self, test_data_factory):
        d = test_data_factory.detection
        origin = detections_from(test_data_factory, [d(category_id=1, score=0.9)])
        adversarial = detections_from(test_data_factory, [d(category_id=1, score=0.1), d(category_id=5, score=0.2)])
        report = diff_labels(origin, adversarial, threshold=0.3)
        assert report.new_labels == 0
        assert report.disappeared_labels == 1
        assert report.bbox_count_adv == 0

    def test_image_only_in_one_dump(self, test_data_factory):
        d = test_data_factory.detection
        origin = detections_from(test_data_factory, [d(image_id=4)])
        report = diff_labels(origin, DetectionSet())
        assert report.disappeared_labels == 1
        assert [row.image_id for row in report.per_image] == [4]

    def test_threshold_range(self, detections_bytes):
        detections = parse_detections(detections_bytes)
        with pytest.raises(DomainError):
            diff_labels(detections, detections, threshold=-0.1)

    def test_random_pairs_match_brute_force(self, rng, test_data_factory):
        for _ in range(100):
            origin_records = test_data_factory.random_records(rng, count=int(rng.integers(0, 15)))
            adv_records = test_data_factory.random_records(rng, count=int(rng.integers(0, 15)))
            origin = detections_from(test_data_factory, origin_records)
            adversarial = detections_from(test_data_factory, adv_records)
            threshold = float(rng.uniform(0.0, 1.0))

            report = diff_labels(origin, adversarial, threshold)
            assert (report.new_labels, report.disappeared_labels) == brute_force_churn(
                origin_records, adv_records, threshold
            )
            assert report.bbox_count_adv - report.bbox_count_origin == report.new_labels - report.disappeared_labels
            reverse = diff_labels(adversarial, origin, threshold)
            assert reverse.new_labels == report.disappeared_labels
            assert reverse.disappeared_labels == report.new_labels


@pytest.mark.unit
class TestIoU:
    """Box overlap in xywh form."""

    def test_half_shifted_square(self):
        assert iou((0, 0, 2, 2), (1, 0, 2, 2)) == pytest.approx(1.0 / 3.0)

    def test_identical_and_disjoint(self):
        assert iou((3, 3, 4, 5), (3, 3, 4, 5)) == pytest.approx(1.0)
        assert iou((0, 0, 1, 1), (5, 5, 1, 1)) == 0.0

    def test_touching_edges(self):
        assert iou((0, 0, 2, 2), (2, 0, 2, 2)) == 0.0

    def test_matrix_shape(self):
        matrix = iou_matrix(np.asarray(GRID_BOXES[:2]), np.asarray(GRID_BOXES))
        assert matrix.shape == (2, 9)
        assert np.allclose(np.diag(matrix[:, :2]), 1.0)

    def test_empty_inputs(self):
        assert iou_matrix(np.zeros((0, 4)), np.asarray(GRID_BOXES)).shape == (0, 9)


def grid_ground_truth(indices=range(9)):
    return {1: [GroundTruthBox(category_id=1, bbox=GRID_BOXES[k], area=64.0) for k in indices]}


def grid_detections(indices, scores=None):
    scores = scores or [0.9 - 0.01 * i for i in range(len(indices))]
    records = [{"image_id": 1, "category_id": 1, "bbox": list(GRID_BOXES[k]), "score": s} for k, s in zip(indices, scores)]
    return parse_detections(json.dumps(records))


@pytest.mark.unit
class TestAveragePrecision:
    """AP at one threshold and the full metric family."""

    def test_false_positive_ranked_first(self):
        gt = {1: [GroundTruthBox(category_id=1, bbox=(0, 0, 10, 10), area=100.0)]}
        detections = parse_detections(
            b'[{"image_id": 1, "category_id": 1, "bbox": [50, 50, 10, 10], "score": 0.9},'
            b' {"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.8}]'
        )
        assert compute_ap(detections, gt, 0.5) == pytest.approx(0.5)

    def test_true_positive_ranked_first(self):
        gt = {1: [GroundTruthBox(category_id=1, bbox=(0, 0, 10, 10), area=100.0)]}
        detections = parse_detections(
            b'[{"image_id": 1, "category_id": 1, "bbox": [50, 50, 10, 10], "score": 0.7},'
            b' {"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.8}]'
        )
        assert compute_ap(detections, gt, 0.5) == pytest.approx(1.0)

    def test_perfect_detector(self, detections_bytes, fixture_ground_truth):
        report = compute_map(parse_detections(detections_bytes), fixture_ground_truth)
        assert report.map == pytest.approx(1.0)
        assert report.ap50 == report.ap75 == pytest.approx(1.0)
        assert report.ar == report.ar1 == report.ar10 == pytest.approx(1.0)
        assert report.ap_small == pytest.approx(1.0)
        assert report.ap_medium is None and report.ap_large is None
        assert report.per_category_ap == {1: pytest.approx(1.0), 3: pytest.approx(1.0), 18: pytest.approx(1.0)}
        assert report.images == 2

    def test_no_detections(self, fixture_ground_truth):
        report = compute_map(DetectionSet(), fixture_ground_truth)
        assert report.map == 0.0 and report.ar == 0.0

    def test_duplicate_detection_is_false_positive(self):
        gt = grid_ground_truth([0])
        assert compute_ap(grid_detections([0, 0]), gt) == pytest.approx(1.0)
        assert compute_ap(grid_detections([0, 0], scores=[0.5, 0.9]), gt) == pytest.approx(1.0)

    def test_categories_without_ground_truth_are_skipped(self, caplog, fixture_ground_truth, test_data_factory):
        d = test_data_factory.detection
        detections = detections_from(
            test_data_factory, [d(image_id=1, category_id=1, bbox=[4, 4, 8, 8]), d(image_id=1, category_id=44)]
        )
        report = compute_map(detections, fixture_ground_truth)
        assert report.skipped_categories == [44]
        assert 44 not in report.per_category_ap
        assert "without ground truth" in caplog.text

    def test_missing_areas_drop_size_bins(self, caplog):
        gt = {1: [GroundTruthBox(category_id=1, bbox=GRID_BOXES[0])]}
        report = compute_map(grid_detections([0]), gt)
        assert report.map == pytest.approx(1.0)
        assert report.ap_small is None
        assert "size-binned" in caplog.text

    def test_recall_caps(self):
        gt = grid_ground_truth(range(3))
        report = compute_map(grid_detections([0, 1, 2]), gt)
        assert report.ar1 == pytest.approx(1.0 / 3.0)
        assert report.ar10 == pytest.approx(1.0)

    def test_max_dets_per_image(self):
        gt = grid_ground_truth(range(9))
        assert compute_ap(grid_detections(list(range(9))), gt, max_dets=3) == pytest.approx(
            np.mean(np.linspace(0, 1, 101) <= 3 / 9)
        )

    @settings(max_examples=50, deadline=None)
    @given(data=st.data())
    def test_more_true_positives_never_lower_ap(self, data):
        subset = data.draw(st.lists(st.integers(0, 8), unique=True, max_size=8))
        extra = data.draw(st.integers(0, 8).filter(lambda k: k not in subset))
        gt = grid_ground_truth()
        before = compute_ap(grid_detections(subset), gt) if subset else 0.0
        after = compute_ap(grid_detections(subset + [extra]), gt)
        assert 0.0 <= before <= after <= 1.0

    @settings(max_examples=50, deadline=None)
    @given(data=st.data())
    def test_bottom_false_positive_never_raises_ap(self, data):
        subset = data.draw(st.lists(st.integers(0, 8), unique=True, min_size=1, max_size=9))
        spot = data.draw(st.sampled_from(subset + [None]))
        gt = grid_ground_truth(data.draw(st.lists(st.integers(0, 8), unique=True, min_size=1, max_size=9)))
        scores = [0.9 - 0.01 * i for i in range(len(subset))]
        box = list(GRID_BOXES[spot]) if spot is not None else [200.0, 200.0, 8.0, 8.0]
        records = [{"image_id": 1, "category_id": 1, "bbox": list(GRID_BOXES[k]), "score": s} for k, s in zip(subset, scores)]
        before = compute_ap(parse_detections(json.dumps(records)), gt)
        records.append({"image_id": 1, "category_id": 1, "bbox": box, "score": 0.05})
        after = compute_ap(parse_detections(json.dumps(records)), gt)
        assert after <= before

    def test_partial_detector_by_hand(self):
        gt = {
            1: [
                GroundTruthBox(category_id=1, bbox=(0, 0, 10, 10), area=100.0),
                GroundTruthBox(category_id=2, bbox=(20, 20, 10, 10), area=100.0),
            ],
            2: [
                GroundTruthBox(category_id=1, bbox=(0, 0, 10, 10), area=100.0),
                GroundTruthBox(category_id=1, bbox=(40, 40, 10, 10), area=100.0),
            ],
        }
        records = [
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
            {"image_id": 2, "category_id": 1, "bbox": [70, 70, 10, 10], "score": 0.8},
            {"image_id": 2, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.7},
            {"image_id": 2, "category_id": 2, "bbox": [20, 20, 10, 10], "score": 0.95},
            {"image_id": 1, "category_id": 2, "bbox": [20, 20, 10, 10], "score": 0.6},
        ]
        detections = parse_detections(json.dumps(records))
        # category 1 ranks TP, FP, TP over three boxes: precision 1 up to recall 1/3, then 2/3 up to 2/3
        ap_person = (34 * 1.0 + 33 * (2.0 / 3.0)) / 101
        # category 2 ranks FP, TP over one box: precision 1/2 at every recall point
        ap_bicycle = 0.5
        expected = (ap_person + ap_bicycle) / 2

        assert compute_ap(detections, gt, 0.5) == pytest.approx(expected)
        report = compute_map(detections, gt)
        assert report.per_category_ap == {1: pytest.approx(ap_person), 2: pytest.approx(ap_bicycle)}
        assert report.map == report.ap50 == report.ap75 == pytest.approx(expected)
        assert report.ar == pytest.approx((2.0 / 3.0 + 1.0) / 2)
        assert report.ap_small == pytest.approx(expected)
        assert report.images == 2


@pytest.mark.unit
class TestCompareAttacks:
    """Attack tables and per-target suppression."""

    def test_relative_drop(self):
        assert relative_drop(0.5, 0.25) == pytest.approx(50.0)
        assert relative_drop(0.0, 0.0) is None
        assert relative_drop(0.4, 0.5) == pytest.approx(-25.0)

    def test_identical_attack_has_no_drop(self, detections_bytes, fixture_ground_truth):
        origin = parse_detections(detections_bytes)
        table = compare_attacks(origin, {"same": origin}, fixture_ground_truth)
        (row,) = table.attacks
        assert row.drops == {"map": 0.0, "ap50": 0.0, "ap75": 0.0, "ar": 0.0}
        assert row.diff.new_labels == row.diff.disappeared_labels == 0
        assert row.orphans == []
        assert table.origin_bbox_count == 2

    def test_blinded_target_lowers_map(self, detections_bytes, fixture_ground_truth):
        origin = parse_detections(detections_bytes)
        blinded = DetectionSet(d for d in origin if d.image_id != 1)
        table = compare_attacks(origin, {"same": origin, "blind": blinded}, fixture_ground_truth)
        assert [row.name for row in table.attacks] == ["same", "blind"]
        blind = table.attacks[1]
        assert blind.metrics.map == pytest.approx(2.0 / 3.0)
        assert blind.drops["map"] == pytest.approx(100.0 / 3.0)
        assert blind.diff.disappeared_labels == 1
        assert blind.orphans == []

    def test_target_suppression(self, detections_bytes):
        origin = parse_detections(detections_bytes)
        blinded = DetectionSet(d for d in origin if d.image_id != 1)
        targets = [
            AttackedTarget(image_id=1, label=1, bbox=(4, 4, 8, 8)),
            AttackedTarget(image_id=2, label=3, bbox=(2, 2, 6, 4)),
            AttackedTarget(image_id=2, label=18, bbox=(10, 10, 4, 4)),
        ]
        results = target_suppression(origin, blinded, targets)
        assert [r.suppressed for r in results] == [True, False, False]
        assert results[1].best_iou_after == pytest.approx(1.0)
        assert not results[2].detected_before

    def test_suppression_threshold_range(self, detections_bytes):
        origin = parse_detections(detections_bytes)
        with pytest.raises(DomainError):
            target_suppression(origin, origin, [], threshold=2.0)
