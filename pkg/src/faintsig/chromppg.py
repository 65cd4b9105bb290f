"""Chrominance PPG: channel averaging, band-pass, CHROM projections, frame
difference and MUSIC heart-rate estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import BandOutOfRange, DegenerateSignal, InputError, NoPeak, TooShort

# Standard skin-tone direction under white light. The collapsed projection
# coefficients in chrom_signals already absorb it; kept for reference.
SKIN_TONE = (0.7682, 0.5121, 0.3841)

BAND_LO = 0.7
BAND_HI = 4.0
FILTER_ORDER = 4
MUSIC_ORDER = 24
MUSIC_SIGNAL_DIM = 2
MUSIC_STEP = 0.005


@dataclass(frozen=True)
class ChannelTraces:
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    fps: float

    def __len__(self):
        return len(self.r)

    def stacked(self) -> np.ndarray:
        return np.stack([self.r, self.g, self.b])


@dataclass(frozen=True)
class PpgSignal:
    values: np.ndarray
    fps: float

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class HrEstimate:
    bpm: float
    peak_hz: float
    freqs: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)


def mean_channel(cell_frames, fps: float) -> ChannelTraces:
    """Average an (T, M, N, 3) stack of cell pixels into per-frame RGB means."""
    arr = np.asarray(cell_frames, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise InputError(f"expected (T, M, N, 3) cell pixels, got {arr.shape}")
    means = arr.mean(axis=(1, 2))
    return ChannelTraces(means[:, 0], means[:, 1], means[:, 2], fps)


def grid_means(rois: np.ndarray, rows: int = 6, cols: int = 6) -> np.ndarray:
    """Per-cell channel means of (T, H, W, 3) ROIs -> (rows*cols, 3, T), row-major cells."""
    t, h, w, c = rois.shape
    blocks = rois.reshape(t, rows, h // rows, cols, w // cols, c).astype(np.float64)
    means = blocks.mean(axis=(2, 4))  # (T, rows, cols, 3)
    return means.reshape(t, rows * cols, c).transpose(1, 2, 0)


def _design(fps: float, lo: float, hi: float, order: int):
    if not 0 < lo < hi:
        raise BandOutOfRange(f"invalid band [{lo}, {hi}] Hz")
    if hi >= fps / 2:
        raise BandOutOfRange(f"upper edge {hi} Hz is not below Nyquist ({fps / 2} Hz)")
    return sps.butter(order, [lo, hi], btype="bandpass", fs=fps, output="sos")


def min_bandpass_length(order: int = FILTER_ORDER) -> int:
    return 3 * order


def _padlen(n: int, fps: float) -> int:
    # about two seconds of mirrored signal, enough to settle the 0.7 Hz edge
    return min(int(round(2 * fps)), n - 1)


def bandpass(trace, fps: float, lo: float = BAND_LO, hi: float = BAND_HI,
             order: int = FILTER_ORDER) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the last axis."""
    x = np.asarray(trace, dtype=np.float64)
    sos = _design(fps, lo, hi, order)
    n = x.shape[-1]
    if n < min_bandpass_length(order):
        raise TooShort(f"{n} samples; band-pass needs at least {min_bandpass_length(order)}")
    # even extension: odd extension turns a high-frequency tail into an in-band ramp
    return sps.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=_padlen(n, fps))


def chrom_signals(r, g, b) -> tuple[np.ndarray, np.ndarray]:
    r, g, b = (np.asarray(v, dtype=np.float64) for v in (r, g, b))
    xs = 3.0 * r - 2.0 * g
    ys = 1.5 * r + g - 1.5 * b
    return xs, ys


def s_hat(xs, ys) -> np.ndarray:
    """First-order (Taylor) stand-in for the ratio Xs/Ys - 1."""
    return np.asarray(xs, dtype=np.float64) - np.asarray(ys, dtype=np.float64)


def ppg_signal(shat, fps: float = 1.0) -> PpgSignal:
    s = np.asarray(shat, dtype=np.float64)
    if s.shape[-1] < 2:
        raise TooShort("frame differencing needs at least 2 samples")
    return PpgSignal(np.diff(s, axis=-1), fps)


def cppg(traces: ChannelTraces, lo: float = BAND_LO, hi: float = BAND_HI) -> PpgSignal:
    """Full chain from raw channel means to the C-PPG signal."""
    rf, gf, bf = bandpass(traces.stacked(), traces.fps, lo, hi)
    xs, ys = chrom_signals(rf, gf, bf)
    return ppg_signal(s_hat(xs, ys), traces.fps)


def estimate_hr_music(ppg: PpgSignal, order: int = MUSIC_ORDER, signal_dim: int = MUSIC_SIGNAL_DIM,
                      lo: float = BAND_LO, hi: float = BAND_HI, step: float = MUSIC_STEP) -> HrEstimate:
    x = np.asarray(ppg.values, dtype=np.float64)
    if len(x) < 64:
        raise TooShort(f"MUSIC needs at least 64 samples, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise DegenerateSignal("signal has non-finite values")
    x = x - x.mean()
    if x.var() < 1e-12:
        raise DegenerateSignal(f"signal variance {x.var():.3g} is below 1e-12")

    snapshots = np.lib.stride_tricks.sliding_window_view(x, order)
    corr = snapshots.T @ snapshots / len(snapshots)
    _, vecs = np.linalg.eigh(corr)  # ascending eigenvalues
    noise = vecs[:, : order - signal_dim]

    freqs = np.round(np.arange(lo, hi + step / 2, step), 10)
    lags = np.arange(order)
    steering = np.exp(-2j * np.pi * np.outer(lags, freqs) / ppg.fps)
    proj = noise.T @ steering
    power = 1.0 / np.maximum(np.sum(np.abs(proj) ** 2, axis=0), np.finfo(float).tiny)

    if power.max() < 2.0 * np.median(power):
        raise NoPeak("pseudo-spectrum has no distinct peak")
    peak = float(freqs[int(np.argmax(power))])
    return HrEstimate(60.0 * peak, peak, freqs, power)


def normalize_u8(values, axis: int | None = None, atol: float = 0.0) -> np.ndarray:
    """Min-max map to 0..255, rounding half up.

    Spans no wider than ``atol`` count as constant and map to 0.
    """
    x = np.asarray(values, dtype=np.float64)
    lo = x.min(axis=axis, keepdims=True)
    span = x.max(axis=axis, keepdims=True) - lo
    flat = span <= atol
    safe = np.where(flat, 1.0, span)
    scaled = np.where(flat, 0.0, (x - lo) / safe * 255.0)
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
