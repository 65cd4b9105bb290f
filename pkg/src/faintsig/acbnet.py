"""Small asymmetric-convolution (ACB) classifier in numpy.

Each conv layer is trained as three parallel branches (3x3, 1x3 and 3x1
kernels whose outputs are summed) and can be fused into one 3x3 kernel for
inference. Architecture:

    [ACB conv -> ReLU -> 2x2 mean pool] x len(channels) -> flatten -> dense -> sigmoid

Arrays are NHWC float64 throughout.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInput,
    InputError,
    NonFiniteLoss,
    SegmentMismatch,
    ShapeMismatch,
    SingleClassDataset,
)

logger = logging.getLogger(__name__)

TRAIN = "train"
FUSED = "fused"
FORMAT = "faintsig-acb"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# ACB convolution
# ---------------------------------------------------------------------------

@dataclass
class AcbKernel:
    k33: np.ndarray  # (3, 3, Cin, Cout)
    k13: np.ndarray  # (1, 3, Cin, Cout)
    k31: np.ndarray  # (3, 1, Cin, Cout)
    bias: np.ndarray  # (Cout,)

    def __post_init__(self):
        cin, cout = self.k33.shape[2:]
        if (self.k33.shape != (3, 3, cin, cout) or self.k13.shape != (1, 3, cin, cout)
                or self.k31.shape != (3, 1, cin, cout) or self.bias.shape != (cout,)):
            raise ShapeMismatch("inconsistent ACB branch shapes")

    def fused(self) -> np.ndarray:
        return fuse_kernels(self.k33, self.k13, self.k31)


def fuse_kernels(k33, k13, k31) -> np.ndarray:
    """Add the 1x3 and 3x1 kernels into the centre row / column of the 3x3."""
    k = np.array(k33, dtype=np.float64, copy=True)
    k[1:2, :, :, :] += k13
    k[:, 1:2, :, :] += k31
    return k


def _patches(x: np.ndarray, stride: int = 1) -> np.ndarray:
    """(N, H, W, C) -> (N, Ho, Wo, 3, 3, C) windows of the zero-padded input."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))  # (N, H, W, C, 3, 3)
    win = win[:, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def _conv(patches: np.ndarray, kernel: np.ndarray, rows=slice(0, 3), cols=slice(0, 3)) -> np.ndarray:
    return np.tensordot(patches[:, :, :, rows, cols, :], kernel, axes=([3, 4, 5], [0, 1, 2]))


def _acb_from_patches(patches, params: dict, prefix: str, mode: str) -> np.ndarray:
    if mode == TRAIN:
        out = _conv(patches, params[prefix + "k33"])
        out = out + _conv(patches, params[prefix + "k13"], rows=slice(1, 2))
        out = out + _conv(patches, params[prefix + "k31"], cols=slice(1, 2))
    else:
        out = _conv(patches, params[prefix + "k"])
    return out + params[prefix + "bias"]


def acb_forward(x, kernel: AcbKernel, mode: str = TRAIN, stride: int = 1) -> np.ndarray:
    """One ACB convolution of an (H, W, Cin) or (N, H, W, Cin) input, 'same' padding."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != kernel.k33.shape[2]:
        raise ShapeMismatch(f"input {x.shape} does not match kernel Cin={kernel.k33.shape[2]}")
    if mode == TRAIN:
        params = {"k33": kernel.k33, "k13": kernel.k13, "k31": kernel.k31, "bias": kernel.bias}
    elif mode == FUSED:
        params = {"k": kernel.fused(), "bias": kernel.bias}
    else:
        raise InputError(f"unknown mode {mode!r}")
    out = _acb_from_patches(_patches(x, stride), params, "", mode)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def _pool_shape(h: int, w: int, stride: int) -> tuple[int, int]:
    h, w = -(-h // stride), -(-w // stride)
    return h // 2, w // 2


@dataclass
class AcbModel:
    input_shape: tuple
    channels: tuple = (4, 8)
    strides: tuple = (1, 1)
    mode: str = TRAIN
    seed: int = 0
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, input_shape=(36, 128, 3), channels=(4, 8), strides=None, seed: int = 0,
               zero: bool = False, meta: dict | None = None) -> "AcbModel":
        strides = tuple(strides) if strides is not None else (1,) * len(channels)
        if len(strides) != len(channels):
            raise InputError("need one stride per conv layer")
        model = cls(tuple(input_shape), tuple(channels), strides, TRAIN, seed, {}, dict(meta or {}))
        rng = np.random.default_rng(seed)
        h, w, cin = model.input_shape
        for i, (cout, s) in enumerate(zip(channels, strides), start=1):
            # He scaling over the fused 3x3 fan-in, shared among three branches
            std = np.sqrt(2.0 / (9 * cin)) / np.sqrt(3.0)
            for name, shape in (("k33", (3, 3)), ("k13", (1, 3)), ("k31", (3, 1))):
                model.params[f"conv{i}.{name}"] = rng.normal(0.0, std, shape + (cin, cout))
            model.params[f"conv{i}.bias"] = np.zeros(cout)
            h, w = _pool_shape(h, w, s)
            if h < 1 or w < 1:
                raise ShapeMismatch(f"input {input_shape} is too small for {len(channels)} pooling stages")
            cin = cout
        flat = h * w * cin
        model.params["dense.w"] = rng.normal(0.0, np.sqrt(1.0 / flat), flat)
        model.params["dense.b"] = np.zeros(1)
        if zero:
            for v in model.params.values():
                v[...] = 0.0
        return model

    @property
    def n_layers(self) -> int:
        return len(self.channels)

    def num_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "AcbModel":
        return AcbModel(self.input_shape, self.channels, self.strides, self.mode, self.seed,
                        {k: v.copy() for k, v in self.params.items()}, dict(self.meta))

    def kernel(self, layer: int) -> AcbKernel:
        if self.mode != TRAIN:
            raise InputError("branch kernels only exist in train mode")
        p = f"conv{layer}."
        return AcbKernel(self.params[p + "k33"], self.params[p + "k13"], self.params[p + "k31"],
                         self.params[p + "bias"])

    # -- forward / backward -------------------------------------------------

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeMismatch(f"input {x.shape[1:]} does not match model input {self.input_shape}")
        return x

    def _forward(self, x: np.ndarray, keep: bool = False):
        cache = []
        a = x
        for i, s in enumerate(self.strides, start=1):
            patches = _patches(a, s)
            z = _acb_from_patches(patches, self.params, f"conv{i}.", self.mode)
            r = np.maximum(z, 0.0)
            n, h, w, c = r.shape
            h2, w2 = h // 2, w // 2
            pooled = r[:, : 2 * h2, : 2 * w2].reshape(n, h2, 2, w2, 2, c).mean(axis=(2, 4))
            if keep:
                cache.append((a.shape, patches, z))
            a = pooled
        flat = a.reshape(len(a), -1)
        logits = flat @ self.params["dense.w"] + self.params["dense.b"][0]
        return logits, flat, cache

    def logits(self, x) -> np.ndarray:
        return self._forward(self._check_input(x))[0]

    def predict_proba(self, x) -> np.ndarray:
        return sigmoid(self.logits(x))

    def preactivation(self, x, layer: int = 1) -> np.ndarray:
        """Conv output of ``layer`` before the ReLU, for inspection."""
        a = self._check_input(x)
        for i, s in enumerate(self.strides, start=1):
            z = _acb_from_patches(_patches(a, s), self.params, f"conv{i}.", self.mode)
            if i == layer:
                return z
            r = np.maximum(z, 0.0)
            n, h, w, c = r.shape
            a = r[:, : h // 2 * 2, : w // 2 * 2].reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))
        raise InputError(f"no layer {layer}")

    def loss_and_gradients(self, x, labels, l2: float = 0.0) -> tuple[float, dict]:
        """Mean binary cross-entropy (plus optional L2 on kernels) and its exact gradients."""
        if self.mode != TRAIN:
            raise InputError("gradients are defined for train-mode models")
        x = self._check_input(x)
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if len(y) != len(x):
            raise ShapeMismatch(f"{len(x)} inputs but {len(y)} labels")
        logits, flat, cache = self._forward(x, keep=True)
        loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
        if l2:
            loss += 0.5 * l2 * sum(float(np.sum(v * v)) for k, v in self.params.items() if _decays(k))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss is {loss}")

        grads = {}
        dlogit = (sigmoid(logits) - y) / len(y)
        grads["dense.w"] = flat.T @ dlogit
        grads["dense.b"] = np.array([dlogit.sum()])
        dflat = np.outer(dlogit, self.params["dense.w"])

        for i in range(self.n_layers, 0, -1):
            in_shape, patches, z = cache[i - 1]
            n, h, w, c = z.shape
            h2, w2 = h // 2, w // 2
            dpool = dflat.reshape(n, h2, w2, c)
            dr = np.zeros_like(z)
            dr[:, : 2 * h2, : 2 * w2] = np.repeat(np.repeat(dpool, 2, axis=1), 2, axis=2) * 0.25
            dz = dr * (z > 0)
            p = f"conv{i}."
            grads[p + "k33"] = np.tensordot(patches, dz, axes=([0, 1, 2], [0, 1, 2]))
            grads[p + "k13"] = np.tensordot(patches[:, :, :, 1:2, :, :], dz, axes=([0, 1, 2], [0, 1, 2]))
            grads[p + "k31"] = np.tensordot(patches[:, :, :, :, 1:2, :], dz, axes=([0, 1, 2], [0, 1, 2]))
            grads[p + "bias"] = dz.sum(axis=(0, 1, 2))
            if i > 1:
                kernel = fuse_kernels(self.params[p + "k33"], self.params[p + "k13"], self.params[p + "k31"])
                dpatch = np.tensordot(dz, kernel, axes=([3], [3]))  # (N, Ho, Wo, 3, 3, Cin)
                dflat = _col2im(dpatch, in_shape, self.strides[i - 1])
        if l2:
            for k, v in self.params.items():
                if _decays(k):
                    grads[k] = grads[k] + l2 * v
        return loss, grads

    # -- fusion / io --------------------------------------------------------

    def fuse(self) -> "AcbModel":
        if self.mode == FUSED:
            return self.copy()
        params = {}
        for i in range(1, self.n_layers + 1):
            p = f"conv{i}."
            params[p + "k"] = fuse_kernels(self.params[p + "k33"], self.params[p + "k13"], self.params[p + "k31"])
            params[p + "bias"] = self.params[p + "bias"].copy()
        params["dense.w"] = self.params["dense.w"].copy()
        params["dense.b"] = self.params["dense.b"].copy()
        return AcbModel(self.input_shape, self.channels, self.strides, FUSED, self.seed, params, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "config": {
                "layers": self.n_layers,
                "input_shape": list(self.input_shape),
                "channels": list(self.channels),
                "strides": list(self.strides),
                "mode": self.mode,
                "seed": self.seed,
            },
            "meta": self.meta,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AcbModel":
        if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
            raise InputError("not a faintsig ACB model file")
        cfg = doc["config"]
        params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
        return cls(tuple(cfg["input_shape"]), tuple(cfg["channels"]), tuple(cfg["strides"]), cfg["mode"],
                   int(cfg["seed"]), params, dict(doc.get("meta", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "AcbModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError as exc:
            raise InputError(f"model file not found: {path}") from exc
        except (json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"malformed model file {path}: {exc}") from exc


def _decays(name: str) -> bool:
    return not (name.endswith("bias") or name.endswith(".b"))


def _col2im(dpatch: np.ndarray, in_shape, stride: int) -> np.ndarray:
    n, h, w, c = in_shape
    ho, wo = dpatch.shape[1:3]
    dx = np.zeros((n, h + 2, w + 2, c))
    for i in range(3):
        for j in range(3):
            dx[:, i: i + stride * ho: stride, j: j + stride * wo: stride] += dpatch[:, :, :, i, j, :]
    return dx[:, 1:-1, 1:-1]


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def gradients(model: AcbModel, batch, labels, l2: float = 0.0) -> dict:
    return model.loss_and_gradients(batch, labels, l2)[1]


def map_input(pixels) -> np.ndarray:
    """Byte map(s) -> float input in [0, 1]."""
    return np.asarray(pixels, dtype=np.float64) / 255.0


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.003
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    l2: float = 1e-4
    channels: tuple = (4, 8)
    flip_augment: bool = True

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1 or self.l2 < 0:
            raise InputError(f"invalid training configuration {self}")


def train(x, labels, config: TrainConfig = TrainConfig(), meta: dict | None = None) -> AcbModel:
    """Mini-batch Adam on mean BCE. ``x`` is (N, H, W, C) in [0, 1]."""
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise EmptyInput("no training samples")
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training data holds a single class")
    model = AcbModel.create(x.shape[1:], config.channels, seed=config.seed, meta=meta)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(p) for k, p in model.params.items()}
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), config.batch_size):
            idx = order[start: start + config.batch_size]
            xb = x[idx]
            if config.flip_augment:
                flips = rng.integers(0, 2, size=(len(idx), 2)).astype(bool)
                xb = xb.copy()
                xb[flips[:, 0]] = xb[flips[:, 0], ::-1]
                xb[flips[:, 1]] = xb[flips[:, 1], :, ::-1]
            loss, grads = model.loss_and_gradients(xb, y[idx], config.l2)
            total += loss * len(idx)
            step += 1
            for k, g in grads.items():
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                mhat = m[k] / (1 - b1 ** step)
                vhat = v[k] / (1 - b2 ** step)
                model.params[k] -= config.learning_rate * mhat / (np.sqrt(vhat) + eps)
        history.append(total / len(x))
        logger.info("epoch %d/%d loss %.5f", epoch + 1, config.epochs, history[-1])
    model.meta["loss_history"] = history
    return model


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    p_fake: float
    segment: object = None
    kind: str = ""


def forward(model: AcbModel, fmap) -> Prediction:
    """Score one FingerprintMap."""
    p = float(model.predict_proba(map_input(fmap.pixels))[0])
    return Prediction(p, fmap.segment, fmap.kind)


def predict_segment(ppg_model: AcbModel | None, ar_model: AcbModel | None, ppg_map=None, ar_map=None) -> float:
    """Fused fake probability of one segment: mean of the available branch scores."""
    if ppg_map is not None and ar_map is not None:
        if ppg_map.source_id != ar_map.source_id or ppg_map.segment != ar_map.segment:
            raise SegmentMismatch(
                f"PPG map ({ppg_map.source_id}, {ppg_map.segment}) and AR map "
                f"({ar_map.source_id}, {ar_map.segment}) come from different segments"
            )
    scores = []
    if ppg_model is not None and ppg_map is not None:
        scores.append(forward(ppg_model, ppg_map).p_fake)
    if ar_model is not None and ar_map is not None:
        scores.append(forward(ar_model, ar_map).p_fake)
    if not scores:
        raise EmptyInput("no model/map pair to score")
    return fuse_scores(*scores)


def fuse_scores(*scores: float) -> float:
    return float(np.mean(scores))


@dataclass(frozen=True)
class VideoVerdict:
    score: float
    fake: bool

    @property
    def label(self) -> str:
        return "fake" if self.fake else "real"


def aggregate_video(scores) -> VideoVerdict:
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        raise EmptyInput("no segment scores to aggregate")
    score = float(scores.mean())
    # a tie at exactly 0.5 counts as fake
    return VideoVerdict(score, score >= 0.5)
