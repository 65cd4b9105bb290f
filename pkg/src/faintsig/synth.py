"""Deterministic synthetic face-skin videos with a known pulse.

Real clips carry a clean sinusoidal blood-volume pulse. Fake clips break it
the ways frame-wise face synthesis does: random phase jumps between short
blocks of frames, and/or the spatial smoothing left by upsampling.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import SpecInvalid
from .ingest import CheekLandmarks, FrameSequence, bilinear_sample

CHANNEL_GAIN = (0.33, 0.77, 0.53)
FAKE_KINDS = ("none", "jitter", "smooth", "both")
JITTER_BLOCK = 16


@dataclass(frozen=True)
class SynthSpec:
    hr_bpm: float = 72.0
    fps: float = 30.0
    frames: int = 300
    base_color: tuple = (180.0, 120.0, 90.0)
    pulse_amplitude: float = 2.0
    noise_sigma: float = 1.0
    seed: int = 0
    fake: str = "none"
    jitter_sigma: float = math.pi
    upsample_factor: int = 2
    height: int = 72
    width: int = 72

    def validate(self) -> None:
        problems = []
        if not 42 <= self.hr_bpm <= 240:
            problems.append(f"hr_bpm {self.hr_bpm} outside [42, 240]")
        # amplitude 0 is allowed as the no-pulse control
        if not (self.pulse_amplitude == 0 or 0.5 <= self.pulse_amplitude <= 5):
            problems.append(f"pulse_amplitude {self.pulse_amplitude} outside [0.5, 5]")
        if self.frames <= 128:
            problems.append(f"frames {self.frames} must exceed 128")
        if not self.fps > 0:
            problems.append("fps must be positive")
        if self.noise_sigma < 0:
            problems.append("noise_sigma must be non-negative")
        if self.fake not in FAKE_KINDS:
            problems.append(f"fake must be one of {FAKE_KINDS}")
        if self.fake in ("smooth", "both"):
            f = self.upsample_factor
            if int(f) != f or f < 2 or self.height % f or self.width % f:
                problems.append(f"upsample_factor {f} must be an integer >= 2 dividing the frame size")
        if self.jitter_sigma < 0:
            problems.append("jitter_sigma must be non-negative")
        if len(self.base_color) != 3:
            problems.append("base_color needs 3 channels")
        if problems:
            raise SpecInvalid("; ".join(problems))


def pulse_wave(spec: SynthSpec, rng_phase: np.random.Generator,
               rng_jitter: np.random.Generator) -> np.ndarray:
    t = np.arange(spec.frames)
    phase = rng_phase.uniform(0.0, 2 * np.pi)
    arg = 2 * np.pi * (spec.hr_bpm / 60.0) * t / spec.fps + phase
    if spec.fake in ("jitter", "both"):
        blocks = -(-spec.frames // JITTER_BLOCK)
        offsets = rng_jitter.normal(0.0, spec.jitter_sigma, blocks)
        arg = arg + offsets[t // JITTER_BLOCK]
    return spec.pulse_amplitude * np.sin(arg)


def smooth_frames(frames: np.ndarray, factor: int) -> np.ndarray:
    """Box-downsample (T, H, W, C) by ``factor`` then bilinearly upsample back."""
    t, h, w, c = frames.shape
    small = frames.reshape(t, h // factor, factor, w // factor, factor, c).mean(axis=(2, 4))
    # half-pixel-centred sampling grid, as image resizers use
    ys = (np.arange(h) + 0.5) / factor - 0.5
    xs = (np.arange(w) + 0.5) / factor - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    stacked = small.transpose(1, 2, 0, 3).reshape(h // factor, w // factor, t * c)
    up = bilinear_sample(stacked, gx, gy)
    return up.reshape(h, w, t, c).transpose(2, 0, 1, 3)


def full_frame_landmarks(frames: int, height: int, width: int) -> CheekLandmarks:
    quad = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], dtype=np.float64)
    return CheekLandmarks(np.repeat(quad[None], frames, axis=0))


def synth_video(spec: SynthSpec, source_id: str = "") -> tuple[FrameSequence, CheekLandmarks]:
    spec.validate()
    rng_phase, rng_noise, rng_jitter = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(3))
    pulse = pulse_wave(spec, rng_phase, rng_jitter)
    base = np.asarray(spec.base_color, dtype=np.float64) + pulse[:, None] * np.asarray(CHANNEL_GAIN)
    frames = np.broadcast_to(base[:, None, None, :], (spec.frames, spec.height, spec.width, 3)).copy()
    if spec.noise_sigma > 0:
        frames += rng_noise.normal(0.0, spec.noise_sigma, frames.shape)
    if spec.fake in ("smooth", "both"):
        frames = smooth_frames(frames, int(spec.upsample_factor))
    pixels = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    seq = FrameSequence(pixels, spec.fps, source_id or f"synth_{spec.seed}")
    return seq, full_frame_landmarks(spec.frames, spec.height, spec.width)


def synth_fake(spec: SynthSpec, source_id: str = "") -> tuple[FrameSequence, CheekLandmarks]:
    if spec.fake == "none":
        raise SpecInvalid("synth_fake needs fake set to jitter, smooth or both")
    return synth_video(spec, source_id)


@dataclass(frozen=True)
class CorpusEntry:
    source_id: str
    label: int  # 1 = fake
    spec: SynthSpec


def corpus_specs(count: int, fake: str = "none", seed: int = 0, frames: int = 300,
                 fps: float = 30.0, noise_sigma: float = 1.0, start: int = 0) -> list[CorpusEntry]:
    """Video specs with per-video heart rate, amplitude, skin tone and seed."""
    if fake not in FAKE_KINDS:
        raise SpecInvalid(f"fake must be one of {FAKE_KINDS}")
    entries = []
    prefix = "real" if fake == "none" else fake
    for i in range(start, start + count):
        # class-specific stream so real and fake corpora never share a seed
        ss = np.random.SeedSequence([seed, FAKE_KINDS.index(fake), i])
        rng = np.random.default_rng(ss)
        tone = rng.uniform(0.8, 1.2)
        spec = SynthSpec(
            hr_bpm=float(rng.uniform(50, 150)),
            fps=fps,
            frames=frames,
            base_color=tuple(float(v) for v in np.array([180.0, 120.0, 90.0]) * tone),
            pulse_amplitude=float(rng.uniform(1.0, 3.0)),
            noise_sigma=noise_sigma,
            seed=int(ss.generate_state(1)[0]),
            fake=fake,
        )
        entries.append(CorpusEntry(f"{prefix}_{i:04d}", int(fake != "none"), spec))
    return entries


def spec_dict(spec: SynthSpec) -> dict:
    d = asdict(spec)
    d["base_color"] = list(d["base_color"])
    return d


def with_fake(spec: SynthSpec, fake: str) -> SynthSpec:
    return replace(spec, fake=fake)
