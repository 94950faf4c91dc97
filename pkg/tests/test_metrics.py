import numpy as np
import pytest

from orbitseg.mask_codec import CategoricalMask
from orbitseg.metrics import (ConfusionTally, DiceReport, dice_scores,
                              report_table, score_pair, tally)


def brute_force_dice(pred, truth, k):
    """Set-arithmetic reference: Dice = 2|P∩T| / (|P| + |T|) per class."""
    out = np.full(k, np.nan)
    for c in range(k):
        p = pred == c
        t = truth == c
        total = p.sum() + t.sum()
        if total > 0:
            out[c] = 2.0 * np.logical_and(p, t).sum() / total
    return out


def masks(rng, k, shape=(13, 11)):
    a = rng.integers(0, k, size=shape, dtype=np.uint8)
    b = rng.integers(0, k, size=shape, dtype=np.uint8)
    return CategoricalMask(a), CategoricalMask(b)


def test_matches_brute_force_on_random_masks():
    rng = np.random.default_rng(11)
    for _ in range(200):
        k = int(rng.integers(2, 7))
        pred, truth = masks(rng, k)
        report = score_pair(pred, truth, k)
        expected = brute_force_dice(pred.data, truth.data, k)
        present = ~np.isnan(expected)
        assert np.array_equal(np.isnan(report.dice), ~present)
        assert np.array_equal(report.dice[present], expected[present])


def test_hand_checked_example():
    # class 1: one agreed pixel, one false positive -> 2*1 / (2*1 + 1 + 0)
    pred = CategoricalMask(np.array([[1, 1], [0, 0]], dtype=np.uint8))
    truth = CategoricalMask(np.array([[1, 0], [0, 0]], dtype=np.uint8))
    report = score_pair(pred, truth, 2)
    assert report.dice[1] == pytest.approx(2 / 3)
    # class 0: two agreed pixels, one missed -> 2*2 / (2*2 + 0 + 1)
    assert report.dice[0] == pytest.approx(4 / 5)
    assert report.support[1] == 1 and report.support[0] == 3


def test_identical_masks_score_one():
    rng = np.random.default_rng(3)
    mask, _ = masks(rng, 5)
    report = score_pair(mask, mask, 5)
    assert np.all(report.dice[~np.isnan(report.dice)] == 1.0)
    assert report.macro_average == 1.0


def test_disjoint_masks_score_zero():
    pred = CategoricalMask(np.full((4, 4), 1, dtype=np.uint8))
    truth = CategoricalMask(np.full((4, 4), 2, dtype=np.uint8))
    report = score_pair(pred, truth, 3)
    assert report.dice[1] == 0.0 and report.dice[2] == 0.0
    assert np.isnan(report.dice[0])


def test_tally_is_additive():
    rng = np.random.default_rng(8)
    pred_a, truth_a = masks(rng, 4)
    pred_b, truth_b = masks(rng, 4, shape=(7, 9))
    merged = tally(pred_a, truth_a, 4) + tally(pred_b, truth_b, 4)
    joint = tally(
        CategoricalMask(np.concatenate([pred_a.data.reshape(1, -1),
                                        pred_b.data.reshape(1, -1)], axis=1)),
        CategoricalMask(np.concatenate([truth_a.data.reshape(1, -1),
                                        truth_b.data.reshape(1, -1)], axis=1)),
        4)
    assert np.array_equal(merged.tp, joint.tp)
    assert np.array_equal(merged.fp, joint.fp)
    assert np.array_equal(merged.fn, joint.fn)
    assert merged.pixel_total == joint.pixel_total


def test_dice_is_symmetric_in_the_pair():
    rng = np.random.default_rng(21)
    for _ in range(20):
        pred, truth = masks(rng, 6)
        a = score_pair(pred, truth, 6).dice
        b = score_pair(truth, pred, 6).dice
        assert np.array_equal(np.isnan(a), np.isnan(b))
        assert np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])


def test_mismatched_shapes_rejected():
    a = CategoricalMask(np.zeros((4, 4), dtype=np.uint8))
    b = CategoricalMask(np.zeros((4, 5), dtype=np.uint8))
    with pytest.raises(ValueError):
        tally(a, b, 2)


def test_index_out_of_range_rejected():
    a = CategoricalMask(np.full((2, 2), 7, dtype=np.uint8))
    with pytest.raises(ValueError):
        tally(a, a, 4)


def test_tallies_of_unequal_width_do_not_merge():
    with pytest.raises(ValueError):
        ConfusionTally.zero(3) + ConfusionTally.zero(4)


def test_absent_policy_exclude_drops_class():
    pred = CategoricalMask(np.zeros((3, 3), dtype=np.uint8))
    report = score_pair(pred, pred, 4)
    assert report.included[0] and not report.included[1:].any()
    assert np.isnan(report.dice[1:]).all()
    assert report.macro_average == 1.0


def test_absent_policy_score_one_keeps_class():
    pred = CategoricalMask(np.zeros((3, 3), dtype=np.uint8))
    report = score_pair(pred, pred, 4, absent_policy="score_one")
    assert report.included.all()
    assert (report.dice == 1.0).all()
    assert report.macro_average == 1.0


def test_absent_policies_agree_when_every_class_appears():
    rng = np.random.default_rng(5)
    pred = CategoricalMask(rng.integers(0, 3, size=(64, 64), dtype=np.uint8))
    truth = CategoricalMask(rng.integers(0, 3, size=(64, 64), dtype=np.uint8))
    a = score_pair(pred, truth, 3, absent_policy="exclude")
    b = score_pair(pred, truth, 3, absent_policy="score_one")
    assert np.array_equal(a.dice, b.dice)
    assert a.macro_average == b.macro_average


def test_unknown_absent_policy_rejected():
    with pytest.raises(ValueError):
        dice_scores(ConfusionTally.zero(2), absent_policy="ignore")


def test_macro_average_is_mean_of_included():
    counts = ConfusionTally(tp=np.array([5, 3, 0]), fp=np.array([1, 0, 0]),
                            fn=np.array([0, 2, 0]), pixel_total=11)
    report = dice_scores(counts)
    expected = (report.dice[0] + report.dice[1]) / 2
    assert report.macro_average == pytest.approx(expected)


def test_macro_average_invariant_under_class_relabeling():
    rng = np.random.default_rng(17)
    pred, truth = masks(rng, 5, shape=(32, 32))
    base = score_pair(pred, truth, 5).macro_average
    perm = np.array([0, 3, 4, 1, 2], dtype=np.uint8)
    swapped = score_pair(CategoricalMask(perm[pred.data]),
                         CategoricalMask(perm[truth.data]), 5).macro_average
    assert swapped == pytest.approx(base, abs=1e-12)


def test_report_table_text_layout(tax):
    rng = np.random.default_rng(2)
    pred, truth = masks(rng, tax.num_classes, shape=(48, 48))
    rep = score_pair(pred, truth, tax.num_classes)
    empty = dice_scores(ConfusionTally.zero(tax.num_classes), "exclude")
    text = report_table({"val": rep, "test": empty}, tax)
    lines = text.strip().splitlines()
    # header + rule + one row per class + the macro row
    assert len(lines) == 2 + tax.num_classes + 1
    assert lines[0].split()[:1] == ["class"]
    assert lines[-1].startswith("macro_average")
    assert lines[2].split()[-1] == "-"  # the empty group shows dashes


def test_report_table_csv_round_trips(tax):
    rng = np.random.default_rng(4)
    pred, truth = masks(rng, tax.num_classes, shape=(40, 40))
    rep = score_pair(pred, truth, tax.num_classes)
    csv = report_table({"train": rep}, tax, fmt="csv")
    lines = csv.strip().splitlines()
    assert lines[0] == "class,train"
    assert len(lines) == 1 + tax.num_classes + 1
    for k in range(tax.num_classes):
        name, cell = lines[1 + k].split(",")
        assert name == tax.name_of(k)
        if not np.isnan(rep.dice[k]):
            assert float(cell) == pytest.approx(rep.dice[k], abs=5e-5)


def test_report_table_rejects_empty_and_bad_fmt(tax):
    with pytest.raises(ValueError):
        report_table({}, tax)
    rep = dice_scores(ConfusionTally.zero(tax.num_classes))
    with pytest.raises(ValueError):
        report_table({"a": rep}, tax, fmt="html")


def test_report_table_rejects_class_count_mismatch(tax):
    rep = dice_scores(ConfusionTally.zero(3))
    with pytest.raises(ValueError):
        report_table({"a": rep}, tax)


def test_empty_tally_macro_is_nan():
    report = dice_scores(ConfusionTally.zero(4))
    assert np.isnan(report.macro_average)
    assert not report.included.any()
