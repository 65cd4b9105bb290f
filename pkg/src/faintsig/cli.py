"""Command-line interface.

Exit codes: 0 success, 1 bad input or usage, 2 degenerate data, 3 internal
error. Data and JSON go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, acbnet
from .armodel import ar_sequence_coeffs
from .config import RunConfig
from .errors import EmptyInput, FaintSigError, InputError
from .evaluation import (
    LabelRow,
    accuracy,
    auc,
    check_split,
    read_labels,
    split_by_video,
    write_labels,
    write_roc_csv,
)
from .fingerprint import FingerprintMap, build_ar_map, map_filename, read_map, window_segments, write_map
from .ingest import load_frame_sequence, load_landmarks, write_frame_sequence, write_landmarks
from .pipeline import estimate_video_hr, extract_rois, extract_video, order_sweep, train_config
from .synth import FAKE_KINDS, corpus_specs, synth_video

logger = logging.getLogger("faintsig")

LABELS_FILE = "labels.csv"
LANDMARKS_FILE = "landmarks.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {"seed": args.seed, "jobs": args.jobs}
    for name in ("n", "stride", "ar_order", "epochs", "learning_rate", "batch_size"):
        changes[name] = getattr(args, name, None)
    if getattr(args, "n", None) is not None and getattr(args, "stride", None) is None:
        changes["stride"] = args.n
    return cfg.updated(**changes)


def _load_video(video_dir: Path, landmarks: Path | None = None):
    seq = load_frame_sequence(video_dir)
    lm_path = landmarks or video_dir / LANDMARKS_FILE
    lms = load_landmarks(lm_path, len(seq), seq.shape)
    return seq, lms


def _video_dirs(root: Path) -> list[tuple[str, Path]]:
    """A corpus root (holding labels.csv) or a single video directory."""
    labels = root / LABELS_FILE
    if labels.exists():
        return [(sid, root / sid) for sid in sorted(read_labels(labels))]
    return [(root.name, root)]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synthesize(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = corpus_specs(args.count, args.fake, cfg.seed, args.frames, args.fps, args.noise, args.start)
    rows = {}
    if (out / LABELS_FILE).exists():
        rows = read_labels(out / LABELS_FILE)
    for e in entries:
        seq, lms = synth_video(e.spec, e.source_id)
        write_frame_sequence(seq, out / e.source_id)
        write_landmarks(lms, out / e.source_id / LANDMARKS_FILE)
        rows[e.source_id] = LabelRow(e.source_id, e.label, e.spec.hr_bpm, e.spec.seed)
    write_labels(rows.values(), out / LABELS_FILE)
    _emit({"written": [e.source_id for e in entries], "labels": str(out / LABELS_FILE)})
    return 0


def _extract_one(job):
    sid, vdir, landmarks, cfg, kinds, out = job
    seq, lms = _load_video(vdir, landmarks)
    maps = extract_video(seq, lms, cfg, kinds=kinds)
    written = []
    for m in maps.ppg + maps.ar.get(cfg.ar_order, []):
        write_map(m, out / sid / map_filename(m.kind, m.segment))
        written.append(m.kind)
    return {"sourceId": sid, "segments": max(maps.n_segments, len(maps.ar.get(cfg.ar_order, []))),
            "ppg_maps": written.count("ppg"), "ar_maps": written.count("ar"),
            "degenerate_planes": maps.degenerate_planes}


def cmd_fingerprint(args) -> int:
    cfg = _config(args)
    root, out = Path(args.input), Path(args.out)
    if not root.is_dir():
        raise InputError(f"input directory not found: {root}")
    kinds = ("ppg", "ar") if args.kind == "both" else (args.kind,)
    landmarks = Path(args.landmarks) if args.landmarks else None
    jobs = [(sid, vdir, landmarks, cfg, kinds, out) for sid, vdir in _video_dirs(root)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            videos = list(pool.map(_extract_one, jobs))
    else:
        videos = [_extract_one(j) for j in jobs]
    if (root / LABELS_FILE).exists():
        out.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(root / LABELS_FILE, out / LABELS_FILE)
    warnings = [f"{v['sourceId']}: {v['degenerate_planes']} constant colour plane(s)"
                for v in videos if v["degenerate_planes"]]
    for w in warnings:
        logger.warning(w)
    _emit({"videos": videos, "segments": sum(v["segments"] for v in videos),
           "ppg_maps": sum(v["ppg_maps"] for v in videos), "ar_maps": sum(v["ar_maps"] for v in videos),
           "warnings": warnings})
    return 0


def cmd_extract(args) -> int:
    args.kind = "both"
    return cmd_fingerprint(args)


def cmd_extract_ar(args) -> int:
    cfg = _config(args)
    vdir = Path(args.input)
    seq, lms = _load_video(vdir, Path(args.landmarks) if args.landmarks else None)
    segments = window_segments(len(seq), cfg.n, cfg.stride)
    rois = extract_rois(seq, lms, cfg)
    coeffs, flags = ar_sequence_coeffs(rois, cfg.ar_order)
    out = Path(args.out)
    for seg in segments:
        m = build_ar_map(coeffs[seg.start: seg.stop], seg, seq.source_id, seq.fps)
        write_map(m, out / map_filename("ar", seg))
    if args.dump_coeffs:
        with Path(args.dump_coeffs).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "channel"] + [f"phi_{i}" for i in range(1, cfg.ar_order + 1)])
            for t in range(len(coeffs)):
                for c, name in enumerate("RGB"):
                    w.writerow([t, name] + [repr(float(v)) for v in coeffs[t, c]])
    _emit({"sourceId": seq.source_id, "order": cfg.ar_order, "ar_maps": len(segments),
           "degenerate_planes": int(flags.sum())})
    return 0


def cmd_estimate_hr(args) -> int:
    cfg = _config(args)
    vdir = Path(args.input)
    seq, lms = _load_video(vdir, Path(args.landmarks) if args.landmarks else None)
    est = estimate_video_hr(seq, lms, cfg)
    if args.spectrum:
        with Path(args.spectrum).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hz", "power"])
            for f, p in zip(est.freqs, est.power):
                w.writerow([repr(float(f)), repr(float(p))])
    _emit({"bpm": est.bpm, "peak_hz": est.peak_hz})
    return 0


def read_map_dir(root: Path, kind: str) -> dict[str, list[FingerprintMap]]:
    maps = {}
    for path in sorted(root.glob(f"*/{kind}_*.png")):
        m = read_map(path)
        maps.setdefault(m.source_id, []).append(m)
    return maps


def _labels_for(args, root: Path) -> dict[str, int]:
    path = Path(args.labels) if args.labels else root / LABELS_FILE
    return {k: r.label for k, r in read_labels(path).items()}


def cmd_train(args) -> int:
    cfg = _config(args)
    root = Path(args.maps)
    labels = _labels_for(args, root)
    train_ids, test_ids = split_by_video(labels, cfg.test_fraction, cfg.seed)
    maps = read_map_dir(root, args.kind)
    xs, ys = [], []
    for sid in train_ids:
        for m in maps.get(sid, []):
            xs.append(m.pixels)
            ys.append(labels[sid])
    if not xs:
        raise EmptyInput(f"no {args.kind} maps for the training videos under {root}")
    meta = {"kind": args.kind, "train_ids": train_ids,
            "split": {"seed": cfg.seed, "test_fraction": cfg.test_fraction}}
    model = acbnet.train(acbnet.map_input(np.stack(xs)), np.array(ys), train_config(cfg), meta=meta)
    model.save(args.out)
    _emit({"model": args.out, "kind": args.kind, "train_videos": len(train_ids), "train_maps": len(xs),
           "params": model.num_params(), "final_loss": model.meta["loss_history"][-1]})
    return 0


def _load_models(args) -> dict:
    models = {}
    for kind in ("ppg", "ar"):
        path = getattr(args, f"{kind}_model")
        if path and args.single in (None, kind):
            model = acbnet.AcbModel.load(path)
            if model.meta.get("kind", kind) != kind:
                raise InputError(f"{path} holds a {model.meta.get('kind')} model, not {kind}")
            models[kind] = model.fuse()
    if not models:
        raise InputError("no model given (need --ppg-model and/or --ar-model)")
    return models


def _score_segments(models: dict, maps: dict, sid: str) -> list[dict]:
    by_start = {}
    for kind in models:
        for m in maps[kind].get(sid, []):
            by_start.setdefault(m.segment.start, {})[kind] = m
    rows = []
    for start in sorted(by_start):
        pair = by_start[start]
        if set(pair) != set(models):
            raise InputError(f"{sid} segment {start} lacks a {sorted(set(models) - set(pair))} map")
        scores = {k: acbnet.forward(models[k], pair[k]).p_fake for k in models}
        rows.append({"startFrame": start, **scores, "fused": acbnet.fuse_scores(*scores.values())})
    return rows


def cmd_classify(args) -> int:
    models = _load_models(args)
    root = Path(args.maps)
    maps = {k: {} for k in models}
    for kind in models:
        for path in sorted(root.glob(f"{kind}_*.png")):
            m = read_map(path)
            maps[kind].setdefault(m.source_id, []).append(m)
    sids = sorted(set().union(*(maps[k].keys() for k in models)))
    if not sids:
        raise EmptyInput(f"no fingerprint maps in {root}")
    report = []
    for sid in sids:
        rows = _score_segments(models, maps, sid)
        verdict = acbnet.aggregate_video([r["fused"] for r in rows])
        report.append({"sourceId": sid, "segments": rows, "score": verdict.score, "label": verdict.label})
    _emit(report if len(report) > 1 else report[0])
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    models = _load_models(args)
    root = Path(args.maps)
    labels = _labels_for(args, root)
    _, test_ids = split_by_video(labels, cfg.test_fraction, cfg.seed)
    for kind, model in models.items():
        check_split(model.meta.get("train_ids", []), test_ids)
    maps = {k: read_map_dir(root, k) for k in models}
    seg_labels, seg_scores, vid_labels, vid_scores = [], {k: [] for k in list(models) + ["fused"]}, [], []
    for sid in test_ids:
        rows = _score_segments(models, maps, sid)
        if not rows:
            continue
        for r in rows:
            seg_labels.append(labels[sid])
            for k in seg_scores:
                seg_scores[k].append(r[k])
        vid_labels.append(labels[sid])
        vid_scores.append(acbnet.aggregate_video([r["fused"] for r in rows]).score)
    if not seg_labels:
        raise EmptyInput("no maps for the test videos")
    report = {
        "test_videos": len(vid_labels),
        "test_segments": len(seg_labels),
        "segment_accuracy": accuracy(seg_labels, seg_scores["fused"]),
        "video_accuracy": accuracy(vid_labels, vid_scores),
        "segment_auc": auc(seg_labels, seg_scores["fused"]),
        "video_auc": auc(vid_labels, vid_scores),
        "branches": {k: {"segment_accuracy": accuracy(seg_labels, v), "segment_auc": auc(seg_labels, v)}
                     for k, v in seg_scores.items() if k != "fused"},
    }
    if args.roc:
        write_roc_csv(vid_labels, vid_scores, args.roc)
    _emit(report)
    return 0


def _parse_orders(text: str) -> list[int]:
    try:
        orders = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad order list {text!r}") from exc
    if not orders:
        raise argparse.ArgumentTypeError("order list is empty")
    if any(not 1 <= p <= 36 for p in orders):
        raise argparse.ArgumentTypeError("orders must lie in 1..36")
    return orders


def cmd_order_sweep(args) -> int:
    cfg = _config(args)
    root = Path(args.corpus)
    labels = read_labels(root / LABELS_FILE)
    videos = []
    for sid, vdir in _video_dirs(root):
        seq, lms = _load_video(vdir)
        v = extract_video(seq, lms, cfg, ar_orders=args.orders)
        v.label = labels[sid].label
        videos.append(v)
    rows = order_sweep(videos, args.orders, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["order", "auc"])
    for p, a in rows:
        w.writerow([p, repr(a)])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    seg = argparse.ArgumentParser(add_help=False)
    seg.add_argument("--n", type=int, help="segment length in frames (default 128)")
    seg.add_argument("--stride", type=int, help="segment stride (default n)")
    seg.add_argument("--order", dest="ar_order", type=int, help="AR order (default 36)")

    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--epochs", type=int)
    fit.add_argument("--learning-rate", dest="learning_rate", type=float)
    fit.add_argument("--batch-size", dest="batch_size", type=int)

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--ppg-model")
    models.add_argument("--ar-model")
    models.add_argument("--single", choices=("ppg", "ar"), help="score with one branch only")

    p = _Parser(prog="faintsig", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synthesize", parents=[common], help="write a synthetic labelled corpus")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--fake", choices=FAKE_KINDS, default="none")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=300)
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--noise", type=float, default=1.0)
    s.add_argument("--start", type=int, default=0, help="first video index")
    s.set_defaults(func=cmd_synthesize)

    for name, func, helptext in (("extract", cmd_extract, "write PPG and AR maps"),
                                 ("fingerprint", cmd_fingerprint, "write maps of one or both kinds")):
        e = sub.add_parser(name, parents=[common, seg], help=helptext)
        e.add_argument("input", help="video directory or corpus root with labels.csv")
        e.add_argument("--landmarks", help="landmark file (default <video>/landmarks.json)")
        e.add_argument("--out", required=True)
        if name == "fingerprint":
            e.add_argument("--kind", choices=("ppg", "ar", "both"), default="both")
        e.set_defaults(func=func)

    a = sub.add_parser("extract-ar", parents=[common, seg], help="AR maps and coefficient dump")
    a.add_argument("input")
    a.add_argument("--landmarks")
    a.add_argument("--out", required=True)
    a.add_argument("--dump-coeffs", help="CSV of per-frame coefficients")
    a.set_defaults(func=cmd_extract_ar)

    h = sub.add_parser("estimate-hr", parents=[common], help="MUSIC heart-rate estimate")
    h.add_argument("input")
    h.add_argument("--landmarks")
    h.add_argument("--spectrum", help="write the pseudo-spectrum as CSV")
    h.set_defaults(func=cmd_estimate_hr)

    t = sub.add_parser("train", parents=[common, fit], help="train one branch on the training split")
    t.add_argument("--maps", required=True)
    t.add_argument("--labels")
    t.add_argument("--kind", choices=("ppg", "ar"), required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("classify", parents=[common, models], help="score the maps of one video")
    c.add_argument("--maps", required=True)
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("eval", parents=[common, models], help="metrics on the held-out split")
    v.add_argument("--maps", required=True)
    v.add_argument("--labels")
    v.add_argument("--roc", help="write the video-level ROC as CSV")
    v.set_defaults(func=cmd_eval)

    o = sub.add_parser("order-sweep", parents=[common, seg, fit], help="AR-branch AUC per AR order")
    o.add_argument("--corpus", required=True)
    o.add_argument("--orders", type=_parse_orders, required=True, help="comma-separated, e.g. 1,5,36")
    o.add_argument("--out")
    o.set_defaults(func=cmd_order_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except FaintSigError as exc:
        print(f"faintsig: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"faintsig: internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
