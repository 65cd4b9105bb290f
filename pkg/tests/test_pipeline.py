import numpy as np
import pytest

from faintsig.config import RunConfig
from faintsig.pipeline import (
    extract_corpus,
    extract_video,
    metrics,
    run_experiment,
    score_videos,
    split_videos,
    stack_maps,
)
from faintsig.synth import SynthSpec, corpus_specs, synth_video


@pytest.fixture(scope="module")
def small_corpus():
    entries = corpus_specs(4, "none", seed=1, frames=150) + corpus_specs(4, "both", seed=1, frames=150)
    return extract_corpus(entries, RunConfig(), ar_orders=(2, 36))


def test_extract_video_segments():
    seq, lms = synth_video(SynthSpec(seed=3), "v")
    maps = extract_video(seq, lms, RunConfig(stride=64), ar_orders=(1, 36))
    assert [m.segment.start for m in maps.ppg] == [0, 64, 128]
    assert sorted(maps.ar) == [1, 36]
    assert all(m.pixels.shape == (36, 128, 3) for m in maps.ppg + maps.ar[1])
    assert maps.degenerate_planes == 0


def test_kinds_filter():
    seq, lms = synth_video(SynthSpec(seed=3, frames=140), "v")
    maps = extract_video(seq, lms, RunConfig(), kinds=("ar",))
    assert maps.ppg == [] and len(maps.ar[36]) == 1


def test_parallel_matches_serial(small_corpus):
    entries = corpus_specs(2, "jitter", seed=1, frames=150)
    serial = extract_corpus(entries, RunConfig())
    parallel = extract_corpus(entries, RunConfig(jobs=2))
    for a, b in zip(serial, parallel):
        assert a.source_id == b.source_id
        for ma, mb in zip(a.ppg + a.ar[36], b.ppg + b.ar[36]):
            assert ma.pixels.tobytes() == mb.pixels.tobytes()


def test_stack_and_split(small_corpus):
    x, y, ids = stack_maps(small_corpus, "ar", 2)
    assert x.shape == (8, 36, 128, 3) and 0 <= x.min() and x.max() <= 1
    assert y.tolist() == [0] * 4 + [1] * 4
    train, test = split_videos(small_corpus, RunConfig())
    assert not {v.source_id for v in train} & {v.source_id for v in test}
    assert len(train) + len(test) == 8


def test_experiment_report(small_corpus):
    cfg = RunConfig(epochs=2)
    result = run_experiment(small_corpus, cfg)
    assert set(result["metrics"]) == {"ppg", "ar", "fused"}
    assert set(result["models"]["ar"].meta["train_ids"]) == set(result["train_ids"])
    fused = result["metrics"]["fused"]
    assert fused["videos"] == len(result["test_ids"])
    table = score_videos([v for v in small_corpus if v.source_id in result["test_ids"]], result["models"])
    np.testing.assert_allclose(table.scores["fused"], (table.scores["ppg"] + table.scores["ar"]) / 2)
    assert metrics(table)["fused"] == fused
