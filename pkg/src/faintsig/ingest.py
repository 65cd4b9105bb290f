"""Frame and landmark loading, cheek ROI rectification, 6x6 sub-region grid."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    BadImage,
    CountMismatch,
    DegenerateQuad,
    DimensionMismatch,
    InputError,
    LandmarkError,
    MissingFrame,
)

GRID_ROWS = 6
GRID_COLS = 6
ROI_HEIGHT = 72
ROI_WIDTH = 72
MIN_QUAD_AREA = 16.0

_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")


@dataclass(frozen=True)
class FrameSequence:
    """Decoded RGB frames, stacked as a (T, H, W, 3) uint8 array."""

    frames: np.ndarray
    fps: float
    source_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise DimensionMismatch(f"expected (T, H, W, 3) frames, got {frames.shape}")
        if frames.dtype != np.uint8:
            raise InputError("frames must be 8-bit")
        if len(frames) < 2:
            raise InputError("a frame sequence needs at least 2 frames")
        if not self.fps > 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass(frozen=True)
class CheekLandmarks:
    """One quad per frame, (T, 4, 2) of (x, y): TL, TR, BR, BL."""

    quads: np.ndarray

    def __post_init__(self):
        quads = np.asarray(self.quads, dtype=np.float64)
        if quads.ndim != 3 or quads.shape[1:] != (4, 2):
            raise LandmarkError(f"expected (T, 4, 2) quads, got {quads.shape}")
        quads.setflags(write=False)
        object.__setattr__(self, "quads", quads)

    def __len__(self):
        return len(self.quads)


@dataclass(frozen=True)
class RectifiedRoi:
    pixels: np.ndarray
    frame_index: int = 0


@dataclass(frozen=True)
class SubregionGrid:
    """36 equal cells, row-major; ``cells[0]`` is sub-region 1."""

    cells: np.ndarray
    rows: int = GRID_ROWS
    cols: int = GRID_COLS

    def cell(self, index: int) -> np.ndarray:
        """1-based access, matching the sub-region numbering."""
        return self.cells[index - 1]

    def assemble(self) -> np.ndarray:
        n, h, w, c = self.cells.shape
        blocks = self.cells.reshape(self.rows, self.cols, h, w, c)
        return blocks.transpose(0, 2, 1, 3, 4).reshape(self.rows * h, self.cols * w, c)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def load_frame_sequence(path, fps: float | None = None, source_id: str | None = None) -> FrameSequence:
    path = Path(path)
    if not path.is_dir():
        raise InputError(f"frame directory not found: {path}")
    indexed = {}
    for entry in path.iterdir():
        m = _FRAME_RE.match(entry.name)
        if m:
            indexed[int(m.group(1))] = entry
    if len(indexed) < 2:
        raise InputError(f"{path} holds {len(indexed)} frame(s); need at least 2")
    for i in range(1, max(indexed) + 1):
        if i not in indexed:
            raise MissingFrame(i)

    meta = path / "meta.json"
    if meta.exists():
        try:
            fps = float(json.loads(meta.read_text())["fps"])
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"bad metadata file {meta}: {exc}") from exc
    if fps is None:
        raise InputError("frame rate unknown: pass fps or provide meta.json")

    frames = []
    for i in range(1, len(indexed) + 1):
        try:
            with Image.open(indexed[i]) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            raise BadImage(f"cannot decode {indexed[i].name}: {exc}") from exc
        if frames and arr.shape != frames[0].shape:
            raise DimensionMismatch(
                f"{indexed[i].name} is {arr.shape[1]}x{arr.shape[0]}, "
                f"expected {frames[0].shape[1]}x{frames[0].shape[0]}"
            )
        frames.append(arr)
    return FrameSequence(np.stack(frames), fps, source_id if source_id is not None else path.name)


def write_frame_sequence(seq: FrameSequence, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames, start=1):
        Image.fromarray(frame, mode="RGB").save(path / f"frame_{i:06d}.png")
    (path / "meta.json").write_text(json.dumps({"fps": seq.fps}))


def quad_area(quad) -> float:
    """Signed shoelace area; positive for TL, TR, BR, BL in image coordinates."""
    q = np.asarray(quad, dtype=np.float64)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def validate_quad(quad, frame_shape: tuple[int, int] | None = None) -> None:
    q = np.asarray(quad, dtype=np.float64)
    if q.shape != (4, 2) or not np.all(np.isfinite(q)):
        raise LandmarkError(f"a quad needs 4 finite (x, y) points, got {q.tolist()}")
    if _segments_cross(q[0], q[1], q[2], q[3]) or _segments_cross(q[1], q[2], q[3], q[0]):
        raise DegenerateQuad(f"self-intersecting quad {q.tolist()}")
    area = quad_area(q)
    if area < MIN_QUAD_AREA:
        raise DegenerateQuad(f"quad area {area:.3g} px^2 is below {MIN_QUAD_AREA}")
    if frame_shape is not None:
        h, w = frame_shape
        if q[:, 0].min() < 0 or q[:, 1].min() < 0 or q[:, 0].max() > w - 1 or q[:, 1].max() > h - 1:
            raise LandmarkError(f"quad {q.tolist()} leaves the {w}x{h} frame")


def load_landmarks(path, frame_count: int, frame_shape: tuple[int, int] | None = None) -> CheekLandmarks:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise InputError(f"landmark file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise LandmarkError(f"{path} is not valid JSON: {exc}") from exc
    entries = doc.get("frames") if isinstance(doc, dict) else None
    if not isinstance(entries, list):
        raise LandmarkError(f'{path} lacks a "frames" array')
    if len(entries) != frame_count:
        raise CountMismatch(f"{len(entries)} landmark entries for {frame_count} frames")
    try:
        quads = np.array(entries, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise LandmarkError(f"malformed landmark entries: {exc}") from exc
    if quads.shape[1:] != (4, 2):
        raise LandmarkError(f"each entry must be 4 [x, y] pairs, got shape {quads.shape[1:]}")
    for quad in quads:
        validate_quad(quad, frame_shape)
    return CheekLandmarks(quads)


def write_landmarks(landmarks: CheekLandmarks, path) -> None:
    Path(path).write_text(json.dumps({"frames": landmarks.quads.tolist()}))


# ---------------------------------------------------------------------------
# rectification
# ---------------------------------------------------------------------------

def _affine(src_tri: np.ndarray, dst_tri: np.ndarray) -> np.ndarray:
    """3x2 matrix A with [x, y, 1] @ A mapping dst_tri onto src_tri."""
    system = np.column_stack([dst_tri, np.ones(3)])
    return np.linalg.solve(system, src_tri)


def source_coordinates(quad, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Source (x, y) sampled by every output pixel of the two-triangle warp."""
    q = np.asarray(quad, dtype=np.float64)
    tl, tr, br, bl = q
    for tri in ((tl, tr, br), (tl, br, bl)):
        a = np.array(tri)
        twice_area = (a[1, 0] - a[0, 0]) * (a[2, 1] - a[0, 1]) - (a[1, 1] - a[0, 1]) * (a[2, 0] - a[0, 0])
        if abs(twice_area) < 1e-9:
            raise DegenerateQuad(f"triangle {a.tolist()} of quad is singular")

    x1, y1 = width - 1.0, height - 1.0
    upper = _affine(np.array([tl, tr, br]), np.array([[0, 0], [x1, 0], [x1, y1]], dtype=np.float64))
    lower = _affine(np.array([tl, br, bl]), np.array([[0, 0], [x1, y1], [0, y1]], dtype=np.float64))

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    pts = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
    in_upper = (xx * y1 >= yy * x1)[..., None]
    src = np.where(in_upper, pts @ upper, pts @ lower)
    return src[..., 0], src[..., 1]


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup with clamp-to-edge; returns float64 with image's channel axis."""
    h, w = image.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def rectify_roi(frame, quad, height: int = ROI_HEIGHT, width: int = ROI_WIDTH,
                frame_index: int = 0) -> RectifiedRoi:
    if height < GRID_ROWS or width < GRID_COLS or height % GRID_ROWS or width % GRID_COLS:
        raise InputError(f"ROI size {height}x{width} must be positive multiples of 6")
    frame = np.asarray(frame)
    validate_quad(quad, frame.shape[:2])
    xs, ys = source_coordinates(quad, height, width)
    out = bilinear_sample(frame, xs, ys)
    pixels = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return RectifiedRoi(pixels, frame_index)


def rectify_sequence(seq: FrameSequence, landmarks: CheekLandmarks,
                     height: int = ROI_HEIGHT, width: int = ROI_WIDTH) -> np.ndarray:
    """Rectify every frame; returns (T, height, width, 3) uint8."""
    if len(landmarks) != len(seq):
        raise CountMismatch(f"{len(landmarks)} quads for {len(seq)} frames")
    out = np.empty((len(seq), height, width, 3), dtype=np.uint8)
    quads = landmarks.quads
    start = 0
    # frames sharing one quad are warped together
    while start < len(seq):
        stop = start + 1
        while stop < len(seq) and np.array_equal(quads[stop], quads[start]):
            stop += 1
        validate_quad(quads[start], seq.shape)
        xs, ys = source_coordinates(quads[start], height, width)
        run = seq.frames[start:stop]
        k = stop - start
        stacked = run.transpose(1, 2, 0, 3).reshape(run.shape[1], run.shape[2], k * 3)
        warped = bilinear_sample(stacked, xs, ys).reshape(height, width, k, 3).transpose(2, 0, 1, 3)
        out[start:stop] = np.clip(np.rint(warped), 0, 255).astype(np.uint8)
        start = stop
    return out


def subdivide(roi: RectifiedRoi | np.ndarray, rows: int = GRID_ROWS, cols: int = GRID_COLS) -> SubregionGrid:
    pixels = roi.pixels if isinstance(roi, RectifiedRoi) else np.asarray(roi)
    h, w = pixels.shape[:2]
    if h % rows or w % cols:
        raise InputError(f"ROI {h}x{w} is not divisible into a {rows}x{cols} grid")
    ch, cw = h // rows, w // cols
    cells = pixels.reshape(rows, ch, cols, cw, -1).transpose(0, 2, 1, 3, 4).reshape(rows * cols, ch, cw, -1)
    return SubregionGrid(cells, rows, cols)
