import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faintsig.errors import InputError, LeakageError
from faintsig.evaluation import (
    LabelRow,
    accuracy,
    auc,
    check_split,
    read_labels,
    split_by_video,
    write_labels,
    write_roc_csv,
)


def rank_auc(labels, scores):
    """Mann-Whitney oracle: P(score_pos > score_neg) with ties counting half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestAuc:
    def test_separated(self):
        assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
        assert auc([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == 0.0

    def test_all_tied(self):
        assert auc([0, 1, 0, 1], [0.5] * 4) == 0.5

    def test_random_null(self):
        rng = np.random.default_rng(0)
        labels = np.arange(1000) % 2
        assert 0.45 <= auc(labels, rng.uniform(size=1000)) <= 0.55

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 10)), min_size=2, max_size=40))
    def test_matches_rank_statistic(self, pairs):
        labels = [p[0] for p in pairs]
        if len(set(labels)) < 2:
            return
        scores = [p[1] / 10 for p in pairs]
        assert auc(labels, scores) == pytest.approx(rank_auc(labels, scores), abs=1e-12)

    def test_single_class(self):
        with pytest.raises(InputError):
            auc([1, 1], [0.2, 0.3])

    def test_roc_csv(self, tmp_path):
        write_roc_csv([0, 1, 0, 1], [0.1, 0.9, 0.4, 0.6], tmp_path / "roc.csv")
        rows = list(csv.DictReader((tmp_path / "roc.csv").open()))
        assert list(rows[0]) == ["threshold", "tpr", "fpr"]
        assert (float(rows[-1]["tpr"]), float(rows[-1]["fpr"])) == (1.0, 1.0)


class TestAccuracy:
    def test_tie_is_fake(self):
        assert accuracy([1, 0], [0.5, 0.49]) == 1.0

    def test_half(self):
        assert accuracy([1, 1, 0, 0], [0.9, 0.1, 0.9, 0.1]) == 0.5


class TestSplit:
    labels = {f"v{i:02d}": i % 2 for i in range(20)}

    def test_fractions_and_disjoint(self):
        train, test = split_by_video(self.labels, 0.3, seed=0)
        assert len(test) == 6 and len(train) == 14
        assert not set(train) & set(test)
        assert set(train) | set(test) == set(self.labels)
        assert sum(self.labels[v] for v in test) == 3

    def test_deterministic(self):
        assert split_by_video(self.labels, 0.3, 4) == split_by_video(dict(reversed(self.labels.items())), 0.3, 4)
        assert split_by_video(self.labels, 0.3, 4) != split_by_video(self.labels, 0.3, 5)

    def test_leakage(self):
        with pytest.raises(LeakageError):
            check_split(["a", "b"], ["b", "c"])
        check_split(["a"], ["b"])

    @settings(max_examples=40)
    @given(st.integers(2, 60), st.integers(2, 60), st.integers(0, 1000), st.floats(0.1, 0.5))
    def test_both_classes_each_side(self, n_real, n_fake, seed, frac):
        labels = {f"r{i}": 0 for i in range(n_real)} | {f"f{i}": 1 for i in range(n_fake)}
        train, test = split_by_video(labels, frac, seed)
        for side in (train, test):
            assert {labels[v] for v in side} == {0, 1}


class TestLabels:
    def test_round_trip(self, tmp_path):
        rows = [LabelRow("b", 1, 71.5, 3), LabelRow("a", 0, 60.0, 1)]
        write_labels(rows, tmp_path / "labels.csv")
        assert (tmp_path / "labels.csv").read_text().splitlines()[0] == "sourceId,label,hrBpm,seed"
        back = read_labels(tmp_path / "labels.csv")
        assert back == {"a": rows[1], "b": rows[0]}

    def test_bad_label(self, tmp_path):
        (tmp_path / "labels.csv").write_text("sourceId,label\nx,maybe\n")
        with pytest.raises(InputError):
            read_labels(tmp_path / "labels.csv")

    def test_missing(self, tmp_path):
        with pytest.raises(InputError):
            read_labels(tmp_path / "nope.csv")
