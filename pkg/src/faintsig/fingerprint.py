"""36 x n fingerprint maps (PPG and AR kinds) and their PNG + JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .chromppg import BAND_HI, BAND_LO, bandpass, chrom_signals, normalize_u8, ppg_signal, s_hat
from .errors import InputError, LengthMismatch, MetadataMissing, ShapeError, TooShortVideo

MAP_ROWS = 36
SEGMENT_LENGTH = 128
KINDS = ("ppg", "ar")
# band-passing a constant leaves rounding residue of order 1e-14; treat
# anything this flat as constant rather than stretching it to full range
FLAT_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    start: int
    length: int = SEGMENT_LENGTH

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class FingerprintMap:
    kind: str
    pixels: np.ndarray
    segment: Segment
    source_id: str = ""
    fps: float = 30.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown map kind {self.kind!r}")
        px = np.asarray(self.pixels)
        if px.shape != (MAP_ROWS, self.segment.length, 3) or px.dtype != np.uint8:
            raise ShapeError(f"map must be {MAP_ROWS}x{self.segment.length}x3 uint8, got {px.shape} {px.dtype}")

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "sourceId": self.source_id,
            "startFrame": self.segment.start,
            "n": self.segment.length,
            "fps": self.fps,
        }


def window_segments(video_length: int, n: int = SEGMENT_LENGTH, stride: int | None = None) -> list[Segment]:
    stride = n if stride is None else stride
    if n < 64:
        raise InputError(f"segment length {n} is below 64")
    if stride < 1:
        raise InputError("stride must be positive")
    if video_length <= n:
        raise TooShortVideo(f"video has {video_length} frames; segments of {n} need more")
    return [Segment(s, n) for s in range(0, video_length - n + 1, stride)]


def ppg_planes(cell_traces: np.ndarray, fps: float, lo: float = BAND_LO, hi: float = BAND_HI) -> np.ndarray:
    """Raw (R, G, C-PPG) rows before byte normalization; returns (3, 36, n)."""
    traces = np.asarray(cell_traces, dtype=np.float64)
    if traces.ndim != 3 or traces.shape[:2] != (MAP_ROWS, 3):
        raise LengthMismatch(f"expected (36, 3, n) sub-region traces, got {traces.shape}")
    filtered = bandpass(traces, fps, lo, hi)
    rf, gf, bf = filtered[:, 0], filtered[:, 1], filtered[:, 2]
    c = ppg_signal(s_hat(*chrom_signals(rf, gf, bf))).values
    # differencing drops one sample; repeat the last one to keep n columns
    c = np.concatenate([c, c[:, -1:]], axis=1)
    return np.stack([rf, gf, c])


def build_ppg_map(cell_traces: np.ndarray, fps: float, segment: Segment | None = None,
                  source_id: str = "", lo: float = BAND_LO, hi: float = BAND_HI) -> FingerprintMap:
    planes = ppg_planes(cell_traces, fps, lo, hi)
    n = planes.shape[-1]
    segment = segment or Segment(0, n)
    if segment.length != n:
        raise LengthMismatch(f"traces have {n} frames, segment expects {segment.length}")
    pixels = normalize_u8(planes, axis=-1, atol=FLAT_TOL).transpose(1, 2, 0)
    return FingerprintMap("ppg", np.ascontiguousarray(pixels), segment, source_id, fps)


def build_ar_map(coeffs: np.ndarray, segment: Segment | None = None, source_id: str = "",
                 fps: float = 30.0) -> FingerprintMap:
    """Per-frame AR coefficients (n, 3, p) -> map whose column j is frame j.

    Orders below 36 are zero-padded so every map keeps 36 rows.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim != 3 or c.shape[1] != 3 or not 1 <= c.shape[2] <= MAP_ROWS:
        raise LengthMismatch(f"expected (n, 3, p<=36) coefficients, got {c.shape}")
    n, _, p = c.shape
    segment = segment or Segment(0, n)
    if segment.length != n:
        raise LengthMismatch(f"{n} frames of coefficients, segment expects {segment.length}")
    if p < MAP_ROWS:
        c = np.concatenate([c, np.zeros((n, 3, MAP_ROWS - p))], axis=2)
    planes = c.transpose(1, 2, 0)  # (3, 36, n)
    pixels = np.stack([normalize_u8(plane) for plane in planes], axis=-1)
    return FingerprintMap("ar", pixels, segment, source_id, fps)


def map_filename(kind: str, segment: Segment) -> str:
    return f"{kind}_{segment.start:06d}.png"


def write_map(fmap: FingerprintMap, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        Image.fromarray(fmap.pixels, mode="RGB").save(path)
        path.with_suffix(".json").write_text(json.dumps(fmap.metadata(), sort_keys=True))
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc
    return path


def read_map(path) -> FingerprintMap:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise MetadataMissing(f"no metadata sidecar next to {path}")
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    meta = json.loads(sidecar.read_text())
    if pixels.shape[0] != MAP_ROWS:
        raise ShapeError(f"{path.name} has {pixels.shape[0]} rows, expected {MAP_ROWS}")
    try:
        segment = Segment(int(meta["startFrame"]), int(meta["n"]))
        return FingerprintMap(meta["kind"], pixels, segment, meta["sourceId"], float(meta["fps"]))
    except KeyError as exc:
        raise MetadataMissing(f"{sidecar.name} lacks field {exc}") from exc
