"""Serpentine pixel serialization and Yule-Walker AR fitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import InputError, NumericalBreakdown, ZeroVariance

logger = logging.getLogger(__name__)

AR_ORDER = 36
_ZERO_VAR = 1e-12


@dataclass(frozen=True)
class ArFit:
    coefficients: np.ndarray
    noise_variance: float
    mean: float
    reflection: np.ndarray
    intercept_mean_removed: bool = True

    @property
    def order(self) -> int:
        return len(self.coefficients)


def serpentine_rows(plane) -> np.ndarray:
    p = np.array(plane, copy=True)
    p[1::2] = p[1::2, ::-1]
    return p.reshape(-1)


def serpentine_scan(plane) -> np.ndarray:
    """Boustrophedon row scan followed by boustrophedon column scan.

    Odd rows (1-based) run left to right, even rows right to left; columns
    alternate top-to-bottom and bottom-to-top the same way.
    """
    p = np.asarray(plane)
    if p.ndim != 2 or min(p.shape) < 2:
        raise InputError(f"serpentine scan needs a 2-D plane of at least 2x2, got {p.shape}")
    return np.concatenate([serpentine_rows(p), serpentine_rows(p.T)])


def _serpentine_batch(planes: np.ndarray) -> np.ndarray:
    """(B, H, W) -> (B, 2*H*W) float64."""
    b = planes.shape[0]
    rows = planes.astype(np.float64, copy=True)
    rows[:, 1::2] = rows[:, 1::2, ::-1]
    cols = np.ascontiguousarray(planes.transpose(0, 2, 1)).astype(np.float64)
    cols[:, 1::2] = cols[:, 1::2, ::-1]
    return np.concatenate([rows.reshape(b, -1), cols.reshape(b, -1)], axis=1)


def autocorrelation(x, maxlag: int) -> np.ndarray:
    """Biased (divide by N) autocorrelation of mean-removed rows, lags 0..maxlag."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[-1]
    x = x - x.mean(axis=-1, keepdims=True)
    nfft = sfft.next_fast_len(2 * n - 1, real=True)
    spec = sfft.rfft(x, nfft, axis=-1)
    acf = sfft.irfft(spec * np.conj(spec), nfft, axis=-1)[..., : maxlag + 1]
    return acf / n


def levinson_durbin(r: np.ndarray, order: int):
    """Solve the Yule-Walker equations for rows of autocorrelations.

    ``r`` has shape (B, order+1). Returns (phi, noise_var, reflection) with
    shapes (B, order), (B,), (B, order). Raises NumericalBreakdown when the
    prediction error stops being positive.
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    batch = r.shape[0]
    phi = np.zeros((batch, order))
    refl = np.zeros((batch, order))
    err = r[:, 0].copy()
    for m in range(order):
        acc = r[:, m + 1] - np.einsum("bi,bi->b", phi[:, :m], r[:, m:0:-1])
        k = acc / err
        prev = phi[:, :m].copy()
        phi[:, :m] = prev - k[:, None] * prev[:, ::-1]
        phi[:, m] = k
        refl[:, m] = k
        err = err * (1.0 - k * k)
        if np.any(~(err > 0)):
            raise NumericalBreakdown(f"prediction error became non-positive at order {m + 1}")
    return phi, err, refl


def fit_ar(seq, order: int = AR_ORDER) -> ArFit:
    x = np.asarray(seq, dtype=np.float64).ravel()
    if order < 1:
        raise InputError("AR order must be at least 1")
    if len(x) <= 4 * order:
        raise InputError(f"{len(x)} samples are too few for an AR({order}) fit")
    r = autocorrelation(x, order)
    if r[0, 0] < _ZERO_VAR:
        raise ZeroVariance("sequence is constant")
    phi, err, refl = levinson_durbin(r, order)
    return ArFit(phi[0], float(err[0]), float(x.mean()), refl[0])


def fit_ar_batch(seqs: np.ndarray, order: int = AR_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Fit every row; constant rows give zero coefficients and a True flag."""
    seqs = np.atleast_2d(seqs)
    if seqs.shape[-1] <= 4 * order:
        raise InputError(f"{seqs.shape[-1]} samples are too few for an AR({order}) fit")
    r = autocorrelation(seqs, order)
    flat = r[:, 0] < _ZERO_VAR
    coeffs = np.zeros((len(seqs), order))
    if np.any(~flat):
        coeffs[~flat], _, _ = levinson_durbin(r[~flat], order)
    return coeffs, flat


def ar_frame_coeffs(roi, order: int = AR_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel AR coefficients of one (H, W, 3) ROI -> ((3, order), (3,) flags)."""
    pixels = roi.pixels if hasattr(roi, "pixels") else np.asarray(roi)
    coeffs, flags = ar_sequence_coeffs(pixels[None], order)
    return coeffs[0], flags[0]


def ar_sequence_coeffs(rois: np.ndarray, order: int = AR_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """(T, H, W, 3) ROIs -> coefficients (T, 3, order) and degeneracy flags (T, 3)."""
    fits, flags = ar_sequence_coeffs_multi(rois, (order,))
    return fits[order], flags


def ar_sequence_coeffs_multi(rois: np.ndarray, orders) -> tuple[dict, np.ndarray]:
    """Like ar_sequence_coeffs for several orders, sharing one autocorrelation pass."""
    orders = sorted({int(p) for p in orders})
    if not orders or orders[0] < 1:
        raise InputError(f"invalid AR orders {orders}")
    t, h, w, c = rois.shape
    planes = rois.transpose(0, 3, 1, 2).reshape(t * c, h, w)
    seqs = _serpentine_batch(planes)
    if seqs.shape[-1] <= 4 * orders[-1]:
        raise InputError(f"{seqs.shape[-1]} samples are too few for an AR({orders[-1]}) fit")
    r = autocorrelation(seqs, orders[-1])
    flags = r[:, 0] < _ZERO_VAR
    if flags.any():
        logger.warning("%d constant colour plane(s); AR coefficients set to zero", int(flags.sum()))
    fits = {}
    for p in orders:
        coeffs = np.zeros((len(seqs), p))
        if np.any(~flags):
            coeffs[~flags], _, _ = levinson_durbin(r[~flags, : p + 1], p)
        fits[p] = coeffs.reshape(t, c, p)
    return fits, flags.reshape(t, c)
