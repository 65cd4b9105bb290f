"""Video-keyed splitting, ROC/AUC and accuracy reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.metrics import auc as _sk_auc
from sklearn.metrics import roc_curve as _sk_roc_curve

from .errors import EmptyInput, InputError, LeakageError

LABEL_NAMES = {"real": 0, "fake": 1, "0": 0, "1": 1}


@dataclass(frozen=True)
class LabelRow:
    source_id: str
    label: int
    hr_bpm: float | None = None
    seed: int | None = None


def read_labels(path) -> dict[str, LabelRow]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"labels file not found: {path}")
    rows = {}
    with path.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            try:
                label = LABEL_NAMES[rec["label"].strip().lower()]
            except KeyError as exc:
                raise InputError(f"bad label row {rec}") from exc
            hr = rec.get("hrBpm")
            seed = rec.get("seed")
            rows[rec["sourceId"]] = LabelRow(rec["sourceId"], label, float(hr) if hr else None,
                                             int(seed) if seed else None)
    return rows


def write_labels(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sourceId", "label", "hrBpm", "seed"])
        for r in sorted(rows, key=lambda r: r.source_id):
            w.writerow([r.source_id, "fake" if r.label else "real",
                        "" if r.hr_bpm is None else repr(r.hr_bpm), "" if r.seed is None else r.seed])


def split_by_video(labels: dict[str, int], test_fraction: float = 0.3, seed: int = 0) -> tuple[list, list]:
    """Stratified 70/30-style split keyed on video identity.

    Every segment of a video follows its video, so no source appears on
    both sides.
    """
    if not labels:
        raise EmptyInput("no videos to split")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    train, test = [], []
    for cls in sorted(set(labels.values())):
        ids = sorted(k for k, v in labels.items() if v == cls)
        ids = [ids[i] for i in rng.permutation(len(ids))]
        n_test = int(round(test_fraction * len(ids)))
        if len(ids) > 1:
            n_test = min(max(n_test, 1), len(ids) - 1)
        test += ids[:n_test]
        train += ids[n_test:]
    train, test = sorted(train), sorted(test)
    check_split(train, test)
    return train, test


def check_split(train_ids, test_ids) -> None:
    shared = sorted(set(train_ids) & set(test_ids))
    if shared:
        raise LeakageError(f"videos on both sides of the split: {shared[:5]}")


def roc_curve(labels, scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) over every unique score threshold."""
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        raise InputError("ROC needs both classes present")
    fpr, tpr, thr = _sk_roc_curve(y, np.asarray(scores, dtype=np.float64), drop_intermediate=False)
    return fpr, tpr, thr


def auc(labels, scores) -> float:
    """Trapezoidal area under the ROC curve."""
    fpr, tpr, _ = roc_curve(labels, scores)
    return float(_sk_auc(fpr, tpr))


def accuracy(labels, scores, threshold: float = 0.5) -> float:
    y = np.asarray(labels)
    if y.size == 0:
        raise EmptyInput("no predictions")
    # scores at exactly the threshold count as fake
    return float(np.mean((np.asarray(scores) >= threshold) == (y == 1)))


def write_roc_csv(labels, scores, path) -> None:
    fpr, tpr, thr = roc_curve(labels, scores)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "tpr", "fpr"])
        for t, tp, fp in zip(thr, tpr, fpr):
            w.writerow([repr(float(t)), repr(float(tp)), repr(float(fp))])
