"""End-to-end orchestration: video -> fingerprints -> models -> metrics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import acbnet
from .armodel import ar_sequence_coeffs_multi
from .chromppg import ChannelTraces, HrEstimate, cppg, estimate_hr_music, grid_means
from .config import RunConfig
from .errors import EmptyInput
from .evaluation import accuracy, auc, check_split, split_by_video
from .fingerprint import FingerprintMap, build_ar_map, build_ppg_map, window_segments
from .ingest import CheekLandmarks, FrameSequence, rectify_sequence
from .synth import CorpusEntry, synth_video

logger = logging.getLogger(__name__)


@dataclass
class VideoMaps:
    source_id: str
    ppg: list[FingerprintMap]
    ar: dict[int, list[FingerprintMap]]
    degenerate_planes: int = 0
    label: int | None = None

    @property
    def n_segments(self) -> int:
        return len(self.ppg)


def extract_rois(seq: FrameSequence, landmarks: CheekLandmarks, config: RunConfig) -> np.ndarray:
    return rectify_sequence(seq, landmarks, config.roi_height, config.roi_width)


def estimate_video_hr(seq: FrameSequence, landmarks: CheekLandmarks, config: RunConfig = RunConfig()) -> HrEstimate:
    """Heart rate from the whole rectified cheek ROI (mean of all 36 cells)."""
    rois = extract_rois(seq, landmarks, config)
    means = grid_means(rois, config.grid_rows, config.grid_cols).mean(axis=0)
    traces = ChannelTraces(means[0], means[1], means[2], seq.fps)
    return estimate_hr_music(cppg(traces, config.band_lo, config.band_hi),
                             lo=config.band_lo, hi=config.band_hi)


def extract_video(seq: FrameSequence, landmarks: CheekLandmarks, config: RunConfig = RunConfig(),
                  kinds=("ppg", "ar"), ar_orders=None) -> VideoMaps:
    """Fingerprint maps for every segment of one video."""
    segments = window_segments(len(seq), config.n, config.stride)
    rois = extract_rois(seq, landmarks, config)
    ppg_maps = []
    if "ppg" in kinds:
        traces = grid_means(rois, config.grid_rows, config.grid_cols)  # (36, 3, T)
        for seg in segments:
            ppg_maps.append(build_ppg_map(traces[:, :, seg.start: seg.stop], seq.fps, seg, seq.source_id,
                                          config.band_lo, config.band_hi))
    ar_maps = {}
    degenerate = 0
    if "ar" in kinds:
        orders = tuple(ar_orders) if ar_orders else (config.ar_order,)
        used = rois[segments[0].start: segments[-1].stop]
        fits, flags = ar_sequence_coeffs_multi(used, orders)
        degenerate = int(flags.sum())
        offset = segments[0].start
        for p, coeffs in fits.items():
            ar_maps[p] = [build_ar_map(coeffs[seg.start - offset: seg.stop - offset], seg, seq.source_id, seq.fps)
                          for seg in segments]
    return VideoMaps(seq.source_id, ppg_maps, ar_maps, degenerate)


def _extract_entry(args) -> VideoMaps:
    entry, config, ar_orders = args
    seq, landmarks = synth_video(entry.spec, entry.source_id)
    maps = extract_video(seq, landmarks, config, ar_orders=ar_orders)
    maps.label = entry.label
    return maps


def extract_corpus(entries: list[CorpusEntry], config: RunConfig = RunConfig(), ar_orders=None) -> list[VideoMaps]:
    """Synthesize and fingerprint a corpus; results keep the input order."""
    jobs = [(e, config, ar_orders) for e in entries]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            return list(pool.map(_extract_entry, jobs, chunksize=4))
    return [_extract_entry(j) for j in jobs]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def train_config(config: RunConfig) -> acbnet.TrainConfig:
    return acbnet.TrainConfig(config.learning_rate, config.batch_size, config.epochs, config.seed,
                              config.l2, flip_augment=config.flip_augment)


def _branch_maps(video: VideoMaps, kind: str, order: int) -> list[FingerprintMap]:
    return video.ppg if kind == "ppg" else video.ar[order]


def stack_maps(videos: list[VideoMaps], kind: str, order: int = 36) -> tuple[np.ndarray, np.ndarray, list[str]]:
    xs, ys, ids = [], [], []
    for v in videos:
        for m in _branch_maps(v, kind, order):
            xs.append(m.pixels)
            ys.append(v.label)
            ids.append(v.source_id)
    if not xs:
        raise EmptyInput("no fingerprint maps")
    return acbnet.map_input(np.stack(xs)), np.asarray(ys), ids


def train_branch(videos: list[VideoMaps], kind: str, config: RunConfig, order: int | None = None) -> acbnet.AcbModel:
    order = order or config.ar_order
    x, y, ids = stack_maps(videos, kind, order)
    meta = {"kind": kind, "train_ids": sorted(set(ids))}
    if kind == "ar":
        meta["ar_order"] = order
    return acbnet.train(x, y, train_config(config), meta=meta)


@dataclass
class ScoreTable:
    """Per-segment branch scores of a set of videos."""

    source_ids: list[str]
    labels: np.ndarray
    scores: dict[str, np.ndarray] = field(default_factory=dict)

    def video_scores(self, kind: str) -> tuple[list[str], np.ndarray, np.ndarray]:
        ids = sorted(set(self.source_ids))
        sid = np.asarray(self.source_ids)
        s = self.scores[kind]
        video = np.array([acbnet.aggregate_video(s[sid == v]).score for v in ids])
        labels = np.array([self.labels[sid == v][0] for v in ids])
        return ids, labels, video


def score_videos(videos: list[VideoMaps], models: dict, order: int = 36, flip: bool = False) -> ScoreTable:
    """Score every segment with each model in ``models`` ({'ppg': m, 'ar': m}); adds 'fused'."""
    table = None
    for kind, model in models.items():
        x, y, ids = stack_maps(videos, kind, order)
        if flip:
            x = x[:, ::-1, ::-1]
        fused_model = model.fuse()
        probs = np.concatenate([fused_model.predict_proba(x[i: i + 64]) for i in range(0, len(x), 64)])
        if table is None:
            table = ScoreTable(ids, y)
        table.scores[kind] = probs
    table.scores["fused"] = np.mean([table.scores[k] for k in models], axis=0)
    return table


def metrics(table: ScoreTable) -> dict:
    out = {}
    for kind in table.scores:
        ids, vlabels, vscores = table.video_scores(kind)
        out[kind] = {
            "segment_accuracy": accuracy(table.labels, table.scores[kind]),
            "segment_auc": auc(table.labels, table.scores[kind]),
            "video_accuracy": accuracy(vlabels, vscores),
            "video_auc": auc(vlabels, vscores),
            "videos": len(ids),
            "segments": len(table.labels),
        }
    return out


def split_videos(videos: list[VideoMaps], config: RunConfig) -> tuple[list[VideoMaps], list[VideoMaps]]:
    train_ids, test_ids = split_by_video({v.source_id: v.label for v in videos}, config.test_fraction, config.seed)
    check_split(train_ids, test_ids)
    train_set = set(train_ids)
    return [v for v in videos if v.source_id in train_set], [v for v in videos if v.source_id not in train_set]


def run_experiment(videos: list[VideoMaps], config: RunConfig) -> dict:
    """Train PPG and AR branches on the train split; report test metrics."""
    train, test = split_videos(videos, config)
    models = {kind: train_branch(train, kind, config) for kind in ("ppg", "ar")}
    table = score_videos(test, models, config.ar_order)
    flipped = score_videos(test, models, config.ar_order, flip=True)
    return {
        "models": models,
        "metrics": metrics(table),
        "flipped_metrics": metrics(flipped),
        "train_ids": [v.source_id for v in train],
        "test_ids": [v.source_id for v in test],
    }


def order_sweep(videos: list[VideoMaps], orders, config: RunConfig) -> list[tuple[int, float]]:
    """Video-level AUC of the AR branch at each AR order."""
    train, test = split_videos(videos, config)
    rows = []
    for p in orders:
        model = train_branch(train, "ar", config, order=p)
        table = score_videos(test, {"ar": model}, order=p)
        _, labels, scores = table.video_scores("ar")
        rows.append((int(p), auc(labels, scores)))
    return rows
