"""Signal container, windowing, synthesis, decimation, and file I/O."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specgad import signals as sig
from specgad import spectral as sp


def make_signal(samples, rate=8000.0, label=None):
    return sig.Signal(np.asarray(samples, float), rate, label=label,
                      source_id="t")


class TestSignal:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sig.Signal(np.array([]), 8000.0)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            sig.Signal(np.array([0.0, np.nan]), 8000.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            sig.Signal(np.array([0.0]), 0.0)


class TestSlidingWindow:
    def test_counts_and_offsets(self):
        s = make_signal(np.arange(10.0))
        ws = sig.sliding_window(s, sig.WindowSpec(4, 2))
        assert ws.count == 4
        assert np.allclose(ws.windows[:, 0], [0, 2, 4, 6])

    def test_non_overlapping_single_window(self):
        s = make_signal(np.arange(8.0))
        ws = sig.sliding_window(s, sig.WindowSpec(8, 8))
        assert ws.count == 1

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="shorter than window"):
            sig.sliding_window(make_signal([1.0, 2.0, 3.0]), sig.WindowSpec(4, 1))

    def test_labels_inherited(self):
        s = make_signal(np.arange(8.0), label=sig.ANOMALOUS)
        ws = sig.sliding_window(s, sig.WindowSpec(4, 4))
        assert ws.labels == [sig.ANOMALOUS, sig.ANOMALOUS]

    @given(st.integers(2, 40), st.integers(1, 40), st.integers(0, 60))
    @settings(max_examples=60, deadline=None)
    def test_windows_inside_signal(self, s_w, s_s, extra):
        m = s_w + extra
        s = make_signal(np.arange(float(m)))
        ws = sig.sliding_window(s, sig.WindowSpec(s_w, s_s))
        assert ws.count == (m - s_w) // s_s + 1
        for i in range(ws.count):
            start = i * s_s
            assert np.array_equal(ws.windows[i], np.arange(start, start + s_w))

    @given(st.integers(2, 16), st.integers(0, 50))
    @settings(max_examples=40, deadline=None)
    def test_non_overlapping_concat_reproduces_prefix(self, s_w, extra):
        m = s_w + extra
        s = make_signal(np.arange(float(m)))
        ws = sig.sliding_window(s, sig.WindowSpec(s_w, s_w))
        flat = ws.windows.reshape(-1)
        assert np.array_equal(flat, s.samples[: ws.count * s_w])


class TestNormalizeWindow:
    def test_constant_maps_to_zero(self):
        assert np.allclose(sig.normalize_window([1.0, 1.0, 1.0, 1.0]), 0.0)

    def test_two_point_symmetry(self):
        out = sig.normalize_window([0.0, 2.0])
        assert np.allclose(out, [-1.0, 1.0], atol=1e-7)

    def test_recomputed_statistics(self):
        rng = np.random.default_rng(3)
        out = sig.normalize_window(rng.standard_normal(512))
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-6


class TestDecimate:
    def test_every_second(self):
        s = make_signal([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], rate=48000)
        out = sig.decimate(s, 2)
        assert np.array_equal(out.samples, [1.0, 3.0, 5.0])
        assert out.sample_rate == 24000

    def test_identity(self):
        s = make_signal([1.0, 2.0, 3.0])
        out = sig.decimate(s, 1)
        assert np.array_equal(out.samples, s.samples)
        assert out.sample_rate == s.sample_rate

    def test_factor_too_large(self):
        with pytest.raises(ValueError):
            sig.decimate(make_signal([1.0, 2.0]), 2)

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(20, 80))
    @settings(max_examples=40, deadline=None)
    def test_composition(self, a, b, n):
        s = make_signal(np.arange(float(n)), rate=48000)
        lhs = sig.decimate(sig.decimate(s, a), b)
        rhs = sig.decimate(s, a * b)
        assert np.array_equal(lhs.samples, rhs.samples)
        assert math.isclose(lhs.sample_rate, rhs.sample_rate, rel_tol=1e-12)


class TestSynthDataset:
    def test_deterministic(self):
        cfg = sig.SynthConfig(n_normal=2, n_anomalous=0, signal_len=256,
                              rng_seed=7)
        a = sig.synth_dataset(cfg)
        b = sig.synth_dataset(cfg)
        for s1, s2 in zip(a, b):
            assert np.array_equal(s1.samples, s2.samples)
            assert s1.source_id == s2.source_id

    def test_empty(self):
        cfg = sig.SynthConfig(n_normal=0, n_anomalous=0, signal_len=64)
        assert sig.synth_dataset(cfg) == []

    def test_counts_and_labels(self):
        cfg = sig.SynthConfig(n_normal=3, n_anomalous=2, signal_len=256)
        out = sig.synth_dataset(cfg)
        assert [s.label for s in out] == [sig.NORMAL] * 3 + [sig.ANOMALOUS] * 2

    def test_burst_band_energy_higher_for_anomalous(self):
        cfg = sig.SynthConfig(n_normal=100, n_anomalous=100, signal_len=2048,
                              snr_db=6.0, anomaly_kind="harmonic_burst",
                              rng_seed=11)
        out = sig.synth_dataset(cfg)

        def band_energy(s):
            spec = np.abs(sp.rfft_half(s.samples).bins) ** 2
            n = len(s.samples)
            total = 0.0
            for mult in (1, 3, 5):
                center = sig._BURST_FUND * mult * n
                lo, hi = int(center) - 4, int(center) + 5
                total += spec[lo:hi].sum()
            return total

        normal = np.mean([band_energy(s) for s in out[:100]])
        anom = np.mean([band_energy(s) for s in out[100:]])
        assert anom > normal

    def test_amplitude_range(self):
        cfg = sig.SynthConfig(n_normal=3, n_anomalous=3, signal_len=512)
        for s in sig.synth_dataset(cfg):
            assert np.abs(s.samples).max() <= 1.0


class TestFileIO:
    def test_csv_verbatim(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("0.0,0.5,-0.5,1.0")
        s = sig.load_signal(p, "csv", sample_rate=8000)
        assert np.array_equal(s.samples, [0.0, 0.5, -0.5, 1.0])
        assert s.sample_rate == 8000

    def test_csv_one_per_line(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("0.25\n-0.25\n")
        s = sig.load_signal(p, "csv", sample_rate=100)
        assert np.array_equal(s.samples, [0.25, -0.25])

    def test_csv_empty_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="empty sample payload"):
            sig.load_signal(p, "csv", sample_rate=100)

    def test_csv_requires_rate(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("0.5")
        with pytest.raises(ValueError):
            sig.load_signal(p, "csv")

    def test_wav_round_trip_exact_levels(self, tmp_path):
        p = tmp_path / "x.wav"
        sig.write_wav(p, make_signal([0.0, 0.5, -0.5], rate=16000))
        s = sig.load_signal(p, "wav_pcm16_mono")
        assert np.array_equal(s.samples, [0.0, 0.5, -0.5])
        assert s.sample_rate == 16000

    def test_wav_round_trip_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(4)
        x = rng.uniform(-1.0, 1.0, 300)
        p = tmp_path / "q.wav"
        sig.write_wav(p, make_signal(x, rate=8000))
        back = sig.load_signal(p, "wav_pcm16_mono")
        assert np.abs(back.samples - x).max() <= 1.0 / 32768

    def test_wav_rejects_stereo(self, tmp_path):
        import wave

        p = tmp_path / "stereo.wav"
        with wave.open(str(p), "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(8000)
            wf.writeframes(b"\x00\x00" * 8)
        with pytest.raises(ValueError, match="mono"):
            sig.load_signal(p, "wav_pcm16_mono")

    def test_wav_rejects_garbage_header(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"not a riff file at all")
        with pytest.raises(ValueError, match="malformed WAV header"):
            sig.load_signal(p, "wav_pcm16_mono")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError, match="unknown format"):
            sig.load_signal(tmp_path / "x.bin", "flac")
