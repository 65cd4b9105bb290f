import math

import numpy as np
import pytest

from faintsig.chromppg import ChannelTraces, cppg, estimate_hr_music, grid_means
from faintsig.errors import DegenerateSignal, NoPeak, SpecInvalid
from faintsig.synth import CHANNEL_GAIN, SynthSpec, corpus_specs, smooth_frames, synth_fake, synth_video


def whole_roi_cppg(seq):
    means = grid_means(np.asarray(seq.frames, dtype=np.float64)).mean(axis=0)
    return cppg(ChannelTraces(means[0], means[1], means[2], seq.fps))


def circular_acf(x, lag):
    x = np.asarray(x, float) - np.mean(x)
    return float(np.dot(x, np.roll(x, -lag)) / np.dot(x, x))


class TestSpec:
    @pytest.mark.parametrize("changes", [
        {"hr_bpm": 30}, {"hr_bpm": 300}, {"pulse_amplitude": 0.2}, {"pulse_amplitude": 8},
        {"frames": 128}, {"fake": "warp"}, {"fake": "smooth", "upsample_factor": 5},
    ])
    def test_invalid(self, changes):
        with pytest.raises(SpecInvalid):
            synth_video(SynthSpec(**changes))

    def test_fake_none_rejected(self):
        with pytest.raises(SpecInvalid):
            synth_fake(SynthSpec())


class TestRealVideo:
    def test_shape_and_landmarks(self):
        seq, lms = synth_video(SynthSpec(frames=150))
        assert seq.frames.shape == (150, 72, 72, 3) and seq.frames.dtype == np.uint8
        assert len(lms) == 150
        np.testing.assert_array_equal(lms.quads[0], [[0, 0], [71, 0], [71, 71], [0, 71]])

    def test_fft_peak_at_heart_rate(self):
        # 300 frames at 30 fps: 0.1 Hz bins, 1.2 Hz falls on bin 12
        seq, _ = synth_video(SynthSpec(hr_bpm=72, pulse_amplitude=2, noise_sigma=0))
        g = seq.frames[..., 1].mean(axis=(1, 2)).astype(float)
        spec = np.abs(np.fft.rfft(g - g.mean()))
        freqs = np.fft.rfftfreq(len(g), 1 / 30)
        assert freqs[np.argmax(spec)] == pytest.approx(1.2)

    def test_channel_gains(self):
        seq, _ = synth_video(SynthSpec(pulse_amplitude=5, noise_sigma=0, base_color=(150, 150, 150)))
        swings = np.ptp(seq.frames.mean(axis=(1, 2)), axis=0)
        np.testing.assert_allclose(swings / swings.max(), np.array(CHANNEL_GAIN) / max(CHANNEL_GAIN), atol=0.15)

    def test_no_pulse(self):
        seq, _ = synth_video(SynthSpec(pulse_amplitude=0, noise_sigma=0))
        with pytest.raises((NoPeak, DegenerateSignal)):
            estimate_hr_music(whole_roi_cppg(seq))

    def test_deterministic(self):
        a, _ = synth_video(SynthSpec(seed=11, fake="both"))
        b, _ = synth_video(SynthSpec(seed=11, fake="both"))
        assert a.frames.tobytes() == b.frames.tobytes()
        c, _ = synth_video(SynthSpec(seed=12, fake="both"))
        assert a.frames.tobytes() != c.frames.tobytes()

    def test_hr_recovered(self):
        seq, _ = synth_video(SynthSpec(hr_bpm=96, seed=3))
        assert estimate_hr_music(whole_roi_cppg(seq)).bpm == pytest.approx(96, abs=2)


class TestFakes:
    def test_jitter_breaks_periodicity(self):
        # lag of one beat at 72 bpm and 30 fps is 25 frames
        real, fake = [], []
        for seed in range(20):
            for kind, out in (("none", real), ("jitter", fake)):
                seq, _ = synth_video(SynthSpec(hr_bpm=72, seed=seed, fake=kind, jitter_sigma=math.pi))
                out.append(circular_acf(whole_roi_cppg(seq).values, 25))
        assert np.mean(real) > 0.9
        assert np.mean(fake) < 0.5

    def test_smoothing_only_changes_texture(self):
        spec = SynthSpec(seed=4)
        real, _ = synth_video(spec)
        smooth, _ = synth_fake(SynthSpec(seed=4, fake="smooth"))
        # frame means survive box filtering; pixel variance does not
        np.testing.assert_allclose(real.frames.mean(axis=(1, 2)), smooth.frames.mean(axis=(1, 2)), atol=0.5)
        assert smooth.frames.astype(float).std(axis=(1, 2)).mean() < 0.7 * real.frames.astype(float).std(
            axis=(1, 2)).mean()

    def test_smooth_frames_preserves_constants(self):
        frames = np.full((2, 8, 8, 3), 42.0)
        np.testing.assert_allclose(smooth_frames(frames, 2), 42.0)

    def test_smooth_frames_block_average(self):
        # a 2x2 block pattern is exactly representable after box-downsampling
        frames = np.kron(np.arange(16.0).reshape(4, 4), np.ones((2, 2)))[None, :, :, None]
        out = smooth_frames(frames, 2)
        # block centres sit between pixels, so interior pixels interpolate neighbours
        assert out.shape == frames.shape
        assert out[0, 0, 0, 0] == pytest.approx(0.0)
        assert out[0, 7, 7, 0] == pytest.approx(15.0)


class TestCorpus:
    def test_ids_and_labels(self):
        real = corpus_specs(3, "none", seed=0)
        fake = corpus_specs(3, "both", seed=0)
        assert [e.source_id for e in real] == ["real_0000", "real_0001", "real_0002"]
        assert [e.label for e in fake] == [1, 1, 1]
        assert {e.spec.seed for e in real}.isdisjoint({e.spec.seed for e in fake})

    def test_ranges(self):
        for e in corpus_specs(50, "jitter", seed=9):
            assert 50 <= e.spec.hr_bpm <= 150
            assert 1 <= e.spec.pulse_amplitude <= 3
            e.spec.validate()

    def test_reproducible(self):
        assert corpus_specs(5, seed=2) == corpus_specs(5, seed=2)
        assert corpus_specs(2, seed=2, start=3)[0] == corpus_specs(5, seed=2)[3]
