import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faintsig.chromppg import (
    ChannelTraces,
    PpgSignal,
    bandpass,
    chrom_signals,
    cppg,
    estimate_hr_music,
    grid_means,
    mean_channel,
    normalize_u8,
    ppg_signal,
    s_hat,
)
from faintsig.errors import BandOutOfRange, DegenerateSignal, NoPeak, TooShort


def _fft_peak_hz(x, fps, pad=16):
    x = np.asarray(x, float) - np.mean(x)
    n = len(x) * pad
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x)), n))
    return np.fft.rfftfreq(n, 1 / fps)[np.argmax(spec)]


class TestMeanChannel:
    def test_uniform_cell(self):
        cell = np.broadcast_to(np.array([10, 20, 30], np.uint8), (5, 12, 12, 3))
        tr = mean_channel(cell, 30.0)
        assert np.all(tr.r == 10) and np.all(tr.g == 20) and np.all(tr.b == 30)

    def test_two_by_two(self):
        cell = np.zeros((1, 2, 2, 3), np.uint8)
        cell[0, 1, :, 0] = 255
        assert mean_channel(cell, 30.0).r[0] == 127.5

    def test_against_double_loop(self):
        cell = np.random.default_rng(0).integers(0, 256, (3, 7, 5, 3), dtype=np.uint8)
        tr = mean_channel(cell, 30.0)
        for t in range(3):
            for c, got in enumerate((tr.r[t], tr.g[t], tr.b[t])):
                total = 0.0
                for i in range(7):
                    for j in range(5):
                        total += float(cell[t, i, j, c])
                assert abs(got - total / 35) < 1e-9

    def test_grid_means_agree_with_cells(self):
        rois = np.random.default_rng(1).integers(0, 256, (4, 72, 72, 3), dtype=np.uint8)
        g = grid_means(rois)
        assert g.shape == (36, 3, 4)
        cell7 = rois[:, 12:24, 12:24]  # row 2, col 2 -> index 7 (0-based)
        np.testing.assert_allclose(g[7], mean_channel(cell7, 30.0).stacked(), atol=1e-12)


class TestBandpass:
    def test_constant_removed(self):
        assert np.max(np.abs(bandpass(np.full(256, 140.0), 30.0))) < 1e-9

    def test_passband_sinusoid(self):
        t = np.arange(512) / 30.0
        x = np.sin(2 * np.pi * 1.2 * t)
        y = bandpass(x, 30.0)
        assert np.corrcoef(x, y)[0, 1] > 0.99
        # FFT magnitude at 1.2 Hz: gain close to one
        k = int(round(1.2 * 512 / 30.0))
        gain = np.abs(np.fft.rfft(y))[k] / np.abs(np.fft.rfft(x))[k]
        assert 0.95 < gain < 1.05

    def test_stopband_sinusoid(self):
        t = np.arange(512) / 30.0
        x = np.sin(2 * np.pi * 10.0 * t)
        y = bandpass(x, 30.0)
        rms = lambda v: np.sqrt(np.mean(v ** 2))
        assert rms(y) < 0.05 * rms(x)
        k = int(round(10 * 512 / 30.0))
        assert np.abs(np.fft.rfft(y))[k] < 0.05 * np.abs(np.fft.rfft(x))[k]

    def test_length_preserved_and_dc_removed(self):
        # 200 whole periods so an ideal band-pass has exactly zero mean
        x = 100 + np.sin(2 * np.pi * 1.5 * np.arange(4000) / 30.0)
        y = bandpass(x, 30.0)
        assert len(y) == len(x)
        assert abs(y.mean()) < 1e-6 * np.max(np.abs(x))

    def test_band_above_nyquist(self):
        with pytest.raises(BandOutOfRange):
            bandpass(np.zeros(256), 6.0, 0.7, 4.0)

    def test_too_short(self):
        with pytest.raises(TooShort):
            bandpass(np.zeros(10), 30.0)


class TestChrom:
    def test_equal_channels(self):
        v = np.random.default_rng(3).normal(size=50)
        xs, ys = chrom_signals(v, v, v)
        np.testing.assert_allclose(xs, v, atol=1e-12)
        np.testing.assert_allclose(ys, v, atol=1e-12)

    def test_red_only(self):
        xs, ys = chrom_signals(np.ones(4), np.zeros(4), np.zeros(4))
        assert np.all(xs == 3) and np.all(ys == 1.5)

    def test_against_oracle(self):
        r, g, b = np.random.default_rng(4).normal(size=(3, 100))
        xs, ys = chrom_signals(r, g, b)
        for i in range(100):
            assert xs[i] == 3 * r[i] - 2 * g[i]
            assert ys[i] == 1.5 * r[i] + g[i] - 1.5 * b[i]

    def test_s_hat(self):
        g = np.random.default_rng(5).normal(size=30)
        z = np.zeros(30)
        np.testing.assert_allclose(s_hat(*chrom_signals(z, g, z)), -3 * g, atol=1e-12)
        assert np.all(s_hat(g, g) == 0)
        r, g, b = np.random.default_rng(6).normal(size=(3, 30))
        np.testing.assert_allclose(s_hat(*chrom_signals(r, g, b)), 1.5 * r - 3 * g + 1.5 * b, atol=1e-12)

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, seed, a, b):
        u, v = np.random.default_rng(seed).normal(size=(2, 3, 40))
        lhs = s_hat(*chrom_signals(*(a * u + b * v)))
        rhs = a * s_hat(*chrom_signals(*u)) + b * s_hat(*chrom_signals(*v))
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)
        xl, yl = chrom_signals(*(a * u + b * v))
        xu, yu = chrom_signals(*u)
        xv, yv = chrom_signals(*v)
        np.testing.assert_allclose(xl, a * xu + b * xv, atol=1e-9)
        np.testing.assert_allclose(yl, a * yu + b * yv, atol=1e-9)


class TestPpgSignal:
    def test_constant(self):
        assert np.all(ppg_signal(np.full(10, 3.0)).values == 0)

    def test_arithmetic(self):
        assert ppg_signal([0, 1, 3, 6]).values.tolist() == [1, 2, 3]

    def test_too_short(self):
        with pytest.raises(TooShort):
            ppg_signal([1.0])

    @pytest.mark.parametrize("freq", [0.8, 1.2, 2.0, 3.1])
    def test_frequency_preserved(self, freq):
        fps, n = 30.0, 300
        s = np.sin(2 * np.pi * freq * np.arange(n) / fps)
        c = ppg_signal(s, fps).values
        bin_hz = fps / (n - 1)
        assert abs(np.argmax(np.abs(np.fft.rfft(c))) * bin_hz - freq) <= bin_hz


class TestMusic:
    def test_pure_sinusoid(self):
        x = np.sin(2 * np.pi * 1.2 * np.arange(127) / 30.0)
        assert _fft_peak_hz(x, 30.0) * 60 == pytest.approx(72, abs=1)
        est = estimate_hr_music(PpgSignal(x, 30.0))
        assert 70 <= est.bpm <= 74
        assert est.bpm == pytest.approx(60 * est.peak_hz)

    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateSignal):
            estimate_hr_music(PpgSignal(np.full(128, 2.0), 30.0))

    def test_dominant_component(self):
        t = np.arange(300) / 30.0
        x = np.sin(2 * np.pi * 1.0 * t) + 0.2 * np.sin(2 * np.pi * 2.5 * t)
        assert _fft_peak_hz(x, 30.0) == pytest.approx(1.0, abs=0.02)
        assert 58 <= estimate_hr_music(PpgSignal(x, 30.0)).bpm <= 62

    def test_spectrum_grid(self):
        x = np.sin(2 * np.pi * 1.5 * np.arange(200) / 30.0)
        est = estimate_hr_music(PpgSignal(x, 30.0))
        assert est.freqs[0] == pytest.approx(0.7) and est.freqs[-1] == pytest.approx(4.0)
        assert len(est.freqs) == 661 and len(est.power) == 661

    def test_flat_spectrum(self):
        # with every eigenvector in the noise subspace the projection norm is
        # |a(f)|^2 = m for all f, so the pseudo-spectrum is flat
        x = np.random.default_rng(0).normal(size=200)
        with pytest.raises(NoPeak):
            estimate_hr_music(PpgSignal(x, 30.0), signal_dim=0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.9, 3.5), st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi))
    def test_agrees_with_fft_oracle(self, freq, seed, phase):
        # SNR 20 dB: noise power = signal power / 100
        n, fps = 300, 30.0
        x = np.sin(2 * np.pi * freq * np.arange(n) / fps + phase)
        x = x + np.random.default_rng(seed).normal(0, np.sqrt(0.5 / 100), n)
        est = estimate_hr_music(PpgSignal(x, fps))
        assert abs(est.bpm - 60 * _fft_peak_hz(x, fps)) <= 2


class TestCppgChain:
    def test_synthetic_traces(self):
        t = np.arange(256) / 30.0
        pulse = np.sin(2 * np.pi * 1.4 * t)
        tr = ChannelTraces(150 + 0.33 * pulse, 100 + 0.77 * pulse, 80 + 0.53 * pulse, 30.0)
        c = cppg(tr)
        assert len(c) == 255
        assert estimate_hr_music(c).bpm == pytest.approx(84, abs=1)


class TestNormalize:
    def test_affine(self):
        assert normalize_u8([0, 0.5, 1]).tolist() == [0, 128, 255]

    def test_constant(self):
        assert normalize_u8([7, 7, 7]).tolist() == [0, 0, 0]

    def test_rows(self):
        out = normalize_u8([[0, 1, 2], [5, 5, 5], [3, 2, 1]], axis=-1)
        assert out.tolist() == [[0, 128, 255], [0, 0, 0], [255, 128, 0]]

    @settings(max_examples=50)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60))
    def test_extremes_and_monotone(self, values):
        x = np.array(values)
        out = normalize_u8(x)
        if x.max() > x.min():
            assert out[np.argmin(x)] == 0 and out[np.argmax(x)] == 255
        order = np.argsort(x, kind="stable")
        assert np.all(np.diff(out[order].astype(int)) >= 0)
