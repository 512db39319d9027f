import numpy as np
import pytest

from jseg import (
    ConfusionCounts,
    InstanceLabelMap,
    binary_measures,
    match_instances,
    panoptic,
    pearson,
)
from oracles import brute_iou_table


def test_perfect_classifier():
    report = binary_measures(ConfusionCounts(tp=50, fp=0, fn=0, tn=50))
    for name in ("j", "mcc", "jaccard", "f1", "tversky", "accuracy"):
        assert report[name] == 1.0
    assert not report.flagged


def test_symmetric_ninety_percent():
    report = binary_measures(ConfusionCounts(tp=45, fp=5, fn=5, tn=45))
    assert report["j"] == pytest.approx(0.8, abs=1e-12)
    assert report["accuracy"] == pytest.approx(0.9, abs=1e-12)


def test_j_is_zero_for_chance_level_rates():
    # expected counts of a pi-rate independent predictor at any pi
    for pi in (0.01, 0.2, 0.5):
        n = 100000
        tp = pi * pi * n
        fn = pi * (1 - pi) * n
        fp = (1 - pi) * pi * n
        tn = (1 - pi) * (1 - pi) * n
        report = binary_measures(ConfusionCounts(int(tp), int(fp), int(fn), int(tn)))
        assert abs(report["j"]) < 1e-9


def test_tversky_half_half_equals_f1():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = ConfusionCounts(*(int(x) for x in rng.integers(1, 100, size=4)))
        report = binary_measures(c, tversky_alpha=0.5, tversky_beta=0.5)
        assert report["tversky"] == pytest.approx(report["f1"], rel=1e-15)


def test_mcc_and_j_agree_in_sign():
    rng = np.random.default_rng(1)
    for _ in range(300):
        c = ConfusionCounts(*(int(x) for x in rng.integers(1, 60, size=4)))
        report = binary_measures(c)
        assert np.sign(report["mcc"]) == np.sign(report["j"]) or (
            abs(report["mcc"]) < 1e-12 and abs(report["j"]) < 1e-12
        )


def test_zero_total_is_an_error():
    with pytest.raises(ValueError):
        binary_measures(ConfusionCounts(0, 0, 0, 0))


def test_zero_denominators_are_flagged():
    report = binary_measures(ConfusionCounts(tp=0, fp=0, fn=0, tn=10))
    assert "j" in report.flagged
    assert report["j"] == 0.0


def test_pearson_perfect_correlations():
    assert pearson([1, 2, 3, 4], [1, 2, 3, 4]) == pytest.approx(1.0, abs=1e-12)
    assert pearson([1, 2, 3, 4], [-1, -2, -3, -4]) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_hand_value():
    # frozen from the closed-form deviation-products oracle:
    # cov = 5, var_x = 2, var_y = 114/9  ->  r = 5 / sqrt(2 * 114 / 9)
    want = 5.0 / np.sqrt(2.0 * 114.0 / 9.0)
    assert pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.9933992677987828, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [2])


def _disc_map(dims, discs):
    labels = np.zeros(dims, dtype=np.int32)
    grids = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    for label, (center, radius) in enumerate(discs, start=1):
        dist2 = sum((g - c) ** 2 for g, c in zip(grids, center))
        labels[dist2 <= radius**2] = label
    return InstanceLabelMap(labels)


def test_panoptic_perfect_prediction():
    gt = _disc_map((20, 20), [((5, 5), 3), ((14, 13), 4)])
    report = panoptic(gt, gt)
    assert report["p05"] == report["rq"] == report["sq"] == report["pq"] == 1.0


def test_panoptic_single_cell_iou_080():
    labels = np.zeros((4, 4), dtype=np.int32)
    labels[0, :] = 1
    labels[1, 0] = 1  # gt: 5 elements
    gt = InstanceLabelMap(labels)
    pred_labels = np.zeros((4, 4), dtype=np.int32)
    pred_labels[0, :] = 1  # pred: 4 of those 5
    pred = InstanceLabelMap(pred_labels)
    report = panoptic(gt, pred)
    assert report["rq"] == 1.0
    assert report["sq"] == pytest.approx(0.8, abs=1e-12)
    assert report["pq"] == pytest.approx(0.8, abs=1e-12)


def test_panoptic_empty_prediction_flags_p05():
    gt = _disc_map((24, 24), [((5, 5), 3), ((16, 6), 3), ((12, 17), 3)])
    report = panoptic(gt, InstanceLabelMap(np.zeros((24, 24), dtype=np.int32)))
    assert report["p05"] == 0.0 and "p05" in report.flagged
    assert report["rq"] == 0.0
    assert report["pq"] == 0.0
    assert report.meta["fn"] == 3


def test_pq_is_sq_times_rq():
    rng = np.random.default_rng(2)
    for _ in range(100):
        dims = (24, 24)
        centers = rng.integers(4, 20, size=(3, 2))
        gt = _disc_map(dims, [(tuple(c), 3) for c in centers])
        # perturb: drop one disc, shift another
        pred_centers = centers + rng.integers(-1, 2, size=centers.shape)
        pred = _disc_map(dims, [(tuple(c), 3) for c in pred_centers[: rng.integers(1, 4)]])
        report = panoptic(gt, pred)
        if report.meta["tp"] > 0:
            assert report["pq"] == pytest.approx(report["sq"] * report["rq"], abs=1e-12)


def test_matching_agrees_with_brute_force_sets():
    rng = np.random.default_rng(3)
    for _ in range(20):
        gt = rng.integers(0, 4, size=(10, 10)).astype(np.int32)
        pred = rng.integers(0, 4, size=(10, 10)).astype(np.int32)
        matching = match_instances(InstanceLabelMap(gt), InstanceLabelMap(pred))
        table = brute_iou_table(gt, pred)
        want = {(g, p): iou for (g, p), iou in table.items() if iou > 0.5}
        got = {(g, p): iou for g, p, iou in matching.matches}
        assert set(got) == set(want)
        for key in got:
            assert got[key] == pytest.approx(want[key], abs=1e-12)


def test_labels_appear_in_at_most_one_match():
    rng = np.random.default_rng(4)
    for _ in range(50):
        gt = rng.integers(0, 5, size=(12, 12)).astype(np.int32)
        pred = rng.integers(0, 5, size=(12, 12)).astype(np.int32)
        matching = match_instances(InstanceLabelMap(gt), InstanceLabelMap(pred))
        gts = [g for g, _, _ in matching.matches]
        preds = [p for _, p, _ in matching.matches]
        assert len(gts) == len(set(gts))
        assert len(preds) == len(set(preds))


def test_metrics_invariant_under_label_permutation():
    gt = _disc_map((20, 20), [((5, 5), 3), ((14, 13), 4)])
    pred = _disc_map((20, 20), [((5, 6), 3), ((14, 12), 4)])
    base = panoptic(gt, pred)
    relabeled = np.where(pred.labels == 1, 7, np.where(pred.labels == 2, 1, 0))
    permuted = panoptic(gt, InstanceLabelMap(relabeled.astype(np.int32)))
    for name in ("p05", "rq", "sq", "pq"):
        assert base[name] == pytest.approx(permuted[name], abs=1e-15)


def test_shape_mismatch_rejected():
    a = InstanceLabelMap(np.zeros((4, 4), dtype=np.int32))
    b = InstanceLabelMap(np.zeros((4, 5), dtype=np.int32))
    with pytest.raises(ValueError):
        panoptic(a, b)
