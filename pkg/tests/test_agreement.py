import numpy as np
import pytest

from miqabench.agreement import (
    MatchConfig,
    agreement,
    average_precision,
    box_iou,
    classification_agreement,
    greedy_match,
    map_score,
    mask_iou,
)
from miqabench.core import (
    BoxItem,
    ClassPrediction,
    DetectionSet,
    InstanceSet,
    MaskItem,
    TaskKind,
    ValidationError,
)
from miqabench.rle import rle_encode

from oracles import naive_greedy, naive_map

CFG = MatchConfig()


def _rect_mask(x, y, w, h, side=20):
    raster = np.zeros((side, side), np.uint8)
    raster[y:y + h, x:x + w] = 1
    return rle_encode(raster)


def _random_instance(rng, use_masks=False):
    """Random matching instance: <= 6 items per side, <= 3 categories,
    integer geometry so IoU ties are common."""
    def items(n):
        out = []
        for _ in range(n):
            cat = int(rng.integers(0, 3))
            conf = float(rng.choice([0.3, 0.5, 0.5, 0.7, 0.9]))  # deliberate ties
            x, y = int(rng.integers(0, 12)), int(rng.integers(0, 12))
            w, h = int(rng.integers(2, 8)), int(rng.integers(2, 8))
            if use_masks:
                w, h = min(w, 20 - x), min(h, 20 - y)
                out.append(
                    {"mask": np.asarray(np.zeros((20, 20))), "category": cat, "confidence": conf,
                     "rect": (x, y, w, h)}
                )
            else:
                out.append(
                    {"bbox": (float(x), float(y), float(w), float(h)), "category": cat,
                     "confidence": conf}
                )
        return out

    preds = items(int(rng.integers(0, 7)))
    refs = items(int(rng.integers(0, 7)))
    return preds, refs


def _to_payload(items, use_masks):
    if use_masks:
        built = []
        for d in items:
            x, y, w, h = d["rect"]
            built.append(MaskItem(_rect_mask(x, y, w, h), d["category"], d.get("confidence")))
        return built
    return [BoxItem(d["bbox"], d["category"], d.get("confidence")) for d in items]


def _to_oracle(items, use_masks):
    if use_masks:
        out = []
        for d in items:
            x, y, w, h = d["rect"]
            raster = np.zeros((20, 20), bool)
            raster[y:y + h, x:x + w] = True
            out.append({"mask": raster, "category": d["category"], "confidence": d.get("confidence", 0.0)})
        return out
    return [dict(d) for d in items]


class TestClassificationAgreement:
    def test_equal_labels(self):
        assert classification_agreement(7, 7) == 1.0

    def test_different_labels(self):
        assert classification_agreement("cat", "dog") == 0.0

    def test_reflexive(self):
        for label in (0, "zebra", 42):
            assert classification_agreement(label, label) == 1.0


class TestIou:
    def test_identical_boxes(self):
        assert box_iou((1, 2, 3, 4), (1, 2, 3, 4)) == 1.0

    def test_disjoint_boxes(self):
        assert box_iou((0, 0, 2, 2), (10, 10, 2, 2)) == 0.0

    def test_worked_example_one_seventh(self):
        assert box_iou((0, 0, 2, 2), (1, 1, 2, 2)) == 1 / 7

    def test_mask_identical_and_disjoint(self):
        a = _rect_mask(0, 0, 5, 5)
        b = _rect_mask(10, 10, 5, 5)
        assert mask_iou(a, a) == 1.0
        assert mask_iou(a, b) == 0.0

    def test_two_empty_masks_agree(self):
        empty = rle_encode(np.zeros((20, 20), np.uint8))
        assert mask_iou(empty, empty) == 1.0

    def test_mask_dimension_mismatch(self):
        a = _rect_mask(0, 0, 5, 5, side=20)
        b = rle_encode(np.zeros((10, 10), np.uint8))
        with pytest.raises(ValidationError):
            mask_iou(a, b)


class TestGreedyMatch:
    def test_perfect_overlap(self):
        items = (BoxItem((0, 0, 5, 5), "a", 0.9), BoxItem((10, 10, 5, 5), "b", 0.8))
        result = greedy_match(DetectionSet(items), items, CFG)
        assert result.precision == 1.0 and result.recall == 1.0
        assert result.pairs == ((0, 0), (1, 1))

    def test_empty_predictions(self):
        refs = (BoxItem((0, 0, 5, 5), "a"),)
        result = greedy_match(DetectionSet(()), refs, CFG)
        assert result.precision == 0.0 and result.recall == 0.0 and result.pairs == ()

    def test_both_empty_is_perfect(self):
        result = greedy_match(DetectionSet(()), (), CFG)
        assert result.precision == 1.0 and result.recall == 1.0

    def test_higher_confidence_wins_contested_ref(self):
        ref = (BoxItem((0, 0, 10, 10), "a"),)
        preds = DetectionSet(
            (
                BoxItem((1, 1, 10, 10), "a", 0.6),   # IoU ~0.68, lower confidence
                BoxItem((0, 0, 10, 11), "a", 0.95),  # IoU ~0.9, higher confidence
            )
        )
        result = greedy_match(preds, ref, CFG)
        assert result.pairs == ((1, 0),)

    def test_mixed_payload_kinds_rejected(self):
        with pytest.raises(ValidationError):
            greedy_match(
                (BoxItem((0, 0, 1, 1), "a", 0.5),),
                (MaskItem(_rect_mask(0, 0, 2, 2), "a"),),
                CFG,
            )

    @pytest.mark.parametrize("use_masks", [False, True])
    def test_matches_naive_oracle(self, use_masks):
        rng = np.random.default_rng(42 if use_masks else 24)
        for _ in range(150):
            preds_raw, refs_raw = _random_instance(rng, use_masks)
            result = greedy_match(
                _to_payload(preds_raw, use_masks), _to_payload(refs_raw, use_masks), CFG
            )
            pairs, precision, recall = naive_greedy(
                _to_oracle(preds_raw, use_masks), _to_oracle(refs_raw, use_masks), CFG.iou_threshold
            )
            assert result.pairs == tuple(pairs)
            assert result.precision == pytest.approx(precision, abs=1e-12)
            assert result.recall == pytest.approx(recall, abs=1e-12)

    def test_one_to_one_and_maximality(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            preds_raw, refs_raw = _random_instance(rng)
            preds = _to_payload(preds_raw, False)
            refs = _to_payload(refs_raw, False)
            result = greedy_match(preds, refs, CFG)
            used_p = [p for p, _ in result.pairs]
            used_r = [r for _, r in result.pairs]
            assert len(set(used_p)) == len(used_p)
            assert len(set(used_r)) == len(used_r)
            # no unmatched same-category pair at IoU >= tau where the pred
            # outranks every matched pred that consumed a ref
            matched_conf = {r: preds[p].confidence for p, r in result.pairs}
            for pi, pred in enumerate(preds):
                if pi in used_p:
                    continue
                for ri, ref in enumerate(refs):
                    if ref.category != pred.category:
                        continue
                    if box_iou(pred.bbox, ref.bbox) < CFG.iou_threshold:
                        continue
                    assert ri in matched_conf
                    assert matched_conf[ri] >= pred.confidence


class TestAveragePrecision:
    def test_worked_example_five_sixths(self):
        refs = (BoxItem((0, 0, 10, 10), "a"), BoxItem((50, 50, 10, 10), "a"))
        preds = DetectionSet(
            (
                BoxItem((0, 0, 10, 10), "a", 0.9),    # TP
                BoxItem((25, 25, 10, 10), "a", 0.8),  # FP
                BoxItem((50, 50, 10, 10), "a", 0.7),  # TP
            )
        )
        assert average_precision(preds, refs, "a", CFG) == 5 / 6
        assert map_score(preds, refs, CFG) == 5 / 6

    def test_identical_sets_score_one(self):
        items = tuple(
            BoxItem((10 * i, 10 * i, 5, 5), i % 2, 1.0) for i in range(4)
        )
        assert map_score(DetectionSet(items), items, CFG) == 1.0

    def test_empty_preds_nonempty_refs(self):
        refs = (BoxItem((0, 0, 5, 5), "a"),)
        assert map_score(DetectionSet(()), refs, CFG) == 0.0

    def test_nonempty_preds_empty_refs(self):
        preds = DetectionSet((BoxItem((0, 0, 5, 5), "a", 0.9),))
        assert map_score(preds, (), CFG) == 0.0

    def test_both_empty_is_perfect(self):
        assert map_score(DetectionSet(()), (), CFG) == 1.0

    @pytest.mark.parametrize("use_masks", [False, True])
    def test_matches_prefix_enumeration_oracle(self, use_masks):
        rng = np.random.default_rng(7 if use_masks else 70)
        for _ in range(150):
            preds_raw, refs_raw = _random_instance(rng, use_masks)
            mine = map_score(
                _to_payload(preds_raw, use_masks), _to_payload(refs_raw, use_masks), CFG
            )
            ref = naive_map(
                _to_oracle(preds_raw, use_masks), _to_oracle(refs_raw, use_masks), CFG.iou_threshold
            )
            assert mine == pytest.approx(ref, abs=1e-12)

    def test_category_relabeling_invariance(self):
        rng = np.random.default_rng(9)
        relabel = {0: "x", 1: "y", 2: "z"}
        for _ in range(50):
            preds_raw, refs_raw = _random_instance(rng)
            before = map_score(_to_payload(preds_raw, False), _to_payload(refs_raw, False), CFG)
            for d in preds_raw + refs_raw:
                d["category"] = relabel[d["category"]]
            after = map_score(_to_payload(preds_raw, False), _to_payload(refs_raw, False), CFG)
            assert before == pytest.approx(after, abs=1e-12)

    def test_coco_range_mode_averages_thresholds(self):
        refs = (BoxItem((0, 0, 10, 10), "a"),)
        preds = DetectionSet((BoxItem((1, 1, 10, 10), "a", 0.9),))  # IoU ~0.68
        cfg_range = MatchConfig(iou_mode="coco_range")
        single = map_score(preds, refs, CFG)
        averaged = map_score(preds, refs, cfg_range)
        assert single == 1.0
        # IoU 0.68 passes thresholds 0.50..0.65 only -> 4/10
        assert averaged == pytest.approx(0.4, abs=1e-12)


class TestAgreementOp:
    def test_self_agreement_every_task(self):
        class_pred = ClassPrediction("cat", 0.9)
        assert agreement(TaskKind.CLASSIFICATION, class_pred, class_pred, CFG) == 1.0

        det = DetectionSet((BoxItem((0, 0, 10, 10), "a", 0.9),))
        assert agreement(TaskKind.DETECTION, det, det, CFG, reference_is_prediction=True) == 1.0

        seg = InstanceSet((MaskItem(_rect_mask(2, 2, 6, 6), "a", 0.9),))
        assert agreement(TaskKind.SEGMENTATION, seg, seg, CFG, reference_is_prediction=True) == 1.0

    def test_classification_vs_ground_truth(self):
        pred = ClassPrediction("cat", 0.99)
        assert agreement(TaskKind.CLASSIFICATION, pred, "dog", CFG) == 0.0
        assert agreement(TaskKind.CLASSIFICATION, pred, "cat", CFG) == 1.0

    def test_prediction_references_are_confidence_filtered(self):
        ref = DetectionSet(
            (
                BoxItem((0, 0, 10, 10), "a", 0.9),
                BoxItem((30, 30, 10, 10), "a", 0.2),  # below the 0.5 cutoff
            )
        )
        pred = DetectionSet((BoxItem((0, 0, 10, 10), "a", 0.9),))
        assert agreement(TaskKind.DETECTION, pred, ref, CFG, reference_is_prediction=True) == 1.0
        # ground-truth references are never filtered
        gt = tuple(BoxItem(b.bbox, b.category) for b in ref.items)
        assert agreement(TaskKind.DETECTION, pred, gt, CFG) == 0.5

    def test_detection_jitter_matches_oracle(self):
        rng = np.random.default_rng(11)
        gt = [
            {"bbox": (0.0, 0.0, 8.0, 8.0), "category": 0, "confidence": 0.9},
            {"bbox": (20.0, 0.0, 8.0, 8.0), "category": 1, "confidence": 0.8},
            {"bbox": (0.0, 20.0, 8.0, 8.0), "category": 0, "confidence": 0.7},
            {"bbox": (20.0, 20.0, 8.0, 8.0), "category": 2, "confidence": 0.6},
        ]
        for _ in range(20):
            jitter = [
                {
                    "bbox": tuple(np.array(d["bbox"]) + rng.integers(-3, 4, 4)),
                    "category": d["category"],
                    "confidence": d["confidence"],
                }
                for d in gt
            ]
            jitter = [d for d in jitter if d["bbox"][2] > 0 and d["bbox"][3] > 0]
            mine = agreement(
                TaskKind.DETECTION,
                DetectionSet(tuple(BoxItem(d["bbox"], d["category"], d["confidence"]) for d in jitter)),
                DetectionSet(tuple(BoxItem(d["bbox"], d["category"], d["confidence"]) for d in gt)),
                CFG,
                reference_is_prediction=True,
            )
            assert mine == pytest.approx(naive_map(jitter, gt, CFG.iou_threshold), abs=1e-12)

    def test_payload_task_mismatch_rejected(self):
        det = DetectionSet((BoxItem((0, 0, 1, 1), "a", 0.9),))
        with pytest.raises(ValidationError):
            agreement(TaskKind.CLASSIFICATION, det, det, CFG)
        with pytest.raises(ValidationError):
            agreement(TaskKind.SEGMENTATION, det, det, CFG)

    def test_scores_always_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            preds_raw, refs_raw = _random_instance(rng)
            value = map_score(_to_payload(preds_raw, False), _to_payload(refs_raw, False), CFG)
            assert 0.0 <= value <= 1.0
