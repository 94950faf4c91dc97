"""Pixel-wise Sørensen-Dice evaluation: Dice_k = 2TP / (2TP + FP + FN).

Tallies are mergeable, so a dataset can be scored by tallying images in any
order or in parallel and summing (micro aggregation). Classes absent from
both masks are excluded from the macro average by default; a score_one
policy is available for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mask_codec import CategoricalMask
from .taxonomy import ClassTaxonomy

ABSENT_POLICIES = ("exclude", "score_one")


@dataclass(frozen=True)
class ConfusionTally:
    """Per-class TP/FP/FN pixel counts; additive across image batches."""

    tp: np.ndarray          # (K,) int64
    fp: np.ndarray          # (K,) int64
    fn: np.ndarray          # (K,) int64
    pixel_total: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.ndim != 1 or (arr < 0).any():
                raise ValueError(f"{name} must be a 1-D array of non-negative counts")
            object.__setattr__(self, name, arr)
        if not (len(self.tp) == len(self.fp) == len(self.fn)):
            raise ValueError("tally arrays must share length")

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    def __add__(self, other: "ConfusionTally") -> "ConfusionTally":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge tallies with different class counts")
        return ConfusionTally(tp=self.tp + other.tp, fp=self.fp + other.fp,
                              fn=self.fn + other.fn,
                              pixel_total=self.pixel_total + other.pixel_total)

    @classmethod
    def zero(cls, num_classes: int) -> "ConfusionTally":
        z = np.zeros(num_classes, dtype=np.int64)
        return cls(tp=z, fp=z.copy(), fn=z.copy(), pixel_total=0)


def tally(pred: CategoricalMask, truth: CategoricalMask, num_classes: int) -> ConfusionTally:
    """Exact-match pixel tally of one prediction against its ground truth."""
    if pred.data.shape != truth.data.shape:
        raise ValueError(f"mask dimensions differ: {pred.data.shape} vs {truth.data.shape}")
    p = pred.data.reshape(-1).astype(np.int64)
    t = truth.data.reshape(-1).astype(np.int64)
    if p.size and max(int(p.max()), int(t.max())) >= num_classes:
        raise ValueError("mask index out of range for the given class count")
    match = p == t
    tp = np.bincount(t[match], minlength=num_classes)
    fp = np.bincount(p[~match], minlength=num_classes)
    fn = np.bincount(t[~match], minlength=num_classes)
    return ConfusionTally(tp=tp, fp=fp, fn=fn, pixel_total=int(p.size))


@dataclass(frozen=True)
class DiceReport:
    """Per-class Dice (NaN marks classes absent from pred and truth both),
    truth-pixel support per class, and the macro average over included classes."""

    dice: np.ndarray          # (K,) float64, NaN = absent
    support: np.ndarray       # (K,) int64 ground-truth pixels per class
    included: np.ndarray      # (K,) bool, True when the class enters the macro
    macro_average: float
    absent_policy: str

    @property
    def num_classes(self) -> int:
        return len(self.dice)


def dice_scores(counts: ConfusionTally, absent_policy: str = "exclude") -> DiceReport:
    """Score a tally. A class with 2TP+FP+FN = 0 appeared in neither mask;
    it is excluded from the macro average (default) or scored 1.0."""
    if absent_policy not in ABSENT_POLICIES:
        raise ValueError(f"absent_policy must be one of {ABSENT_POLICIES}")
    denom = 2 * counts.tp + counts.fp + counts.fn
    present = denom > 0
    dice = np.full(counts.num_classes, np.nan, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        dice[present] = 2.0 * counts.tp[present] / denom[present]
    if absent_policy == "score_one":
        dice[~present] = 1.0
        included = np.ones(counts.num_classes, dtype=bool)
    else:
        included = present.copy()
    macro = float(dice[included].mean()) if included.any() else float("nan")
    return DiceReport(dice=dice, support=counts.tp + counts.fn, included=included,
                      macro_average=macro, absent_policy=absent_policy)


def score_pair(pred: CategoricalMask, truth: CategoricalMask, num_classes: int,
               absent_policy: str = "exclude") -> DiceReport:
    return dice_scores(tally(pred, truth, num_classes), absent_policy)


def _cell(report: DiceReport, k: int) -> str:
    v = report.dice[k]
    return "-" if np.isnan(v) else f"{v:.4f}"


def report_table(reports: dict[str, DiceReport], taxonomy: ClassTaxonomy,
                 fmt: str = "text") -> str:
    """Per-class and macro Dice for one or more groups (splits, spacecraft).

    fmt="text" gives an aligned table, fmt="csv" comma-separated values.
    Absent classes render as a dash in text and as an empty cell in csv.
    """
    if not reports:
        raise ValueError("need at least one report")
    if fmt not in ("text", "csv"):
        raise ValueError("fmt must be 'text' or 'csv'")
    k_count = taxonomy.num_classes
    for name, rep in reports.items():
        if rep.num_classes != k_count:
            raise ValueError(f"report {name!r} has {rep.num_classes} classes, taxonomy has {k_count}")
    groups = list(reports)
    rows = []
    for k in range(k_count):
        rows.append([taxonomy.name_of(k)] + [_cell(reports[g], k) for g in groups])
    rows.append(["macro_average"] + [f"{reports[g].macro_average:.4f}" for g in groups])

    if fmt == "csv":
        out = ["class," + ",".join(groups)]
        for row in rows:
            out.append(",".join("" if c == "-" else c for c in row))
        return "\n".join(out) + "\n"

    header = ["class"] + groups
    widths = [max(len(header[c]), max(len(r[c]) for r in rows)) for c in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines) + "\n"
