import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofcm.errors import ConfigError, ContractError, FormatError
from spoofcm.lfcc import (LfccConfig, Waveform, deltas, extract, frame_count, lfcc,
                          linear_filterbank, read_features, read_wav, write_features,
                          write_wav)


def _write_pcm(path, samples_i16, channels=1, width=2, rate=16000):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(samples_i16, dtype="<i2").tobytes() if width == 2
                       else bytes(len(samples_i16)))


def reference_lfcc(x, sr=16000, win=400, hop=160, nfft=512, nfilt=70, nceps=20, floor=1e-10):
    """Per-frame loops with explicit DFT, triangle and DCT-II sums."""
    n_frames = (len(x) - win) // hop + 1
    n = np.arange(win)
    hamming = 0.54 - 0.46 * np.cos(2 * np.pi * n / (win - 1))
    bins = np.arange(nfft // 2 + 1)
    freqs = bins * sr / nfft
    edges = np.linspace(0, sr / 2, nfilt + 2)
    out = np.zeros((nceps, n_frames))
    for t in range(n_frames):
        frame = x[t * hop:t * hop + win] * hamming
        padded = np.zeros(nfft)
        padded[:win] = frame
        dft = np.array([np.sum(padded * np.exp(-2j * np.pi * k * np.arange(nfft) / nfft))
                        for k in bins])
        power = np.abs(dft) ** 2
        log_e = np.zeros(nfilt)
        for m in range(nfilt):
            lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
            tri = np.where(freqs <= c, (freqs - lo) / (c - lo), (hi - freqs) / (hi - c))
            log_e[m] = np.log(max(np.sum(power * np.clip(tri, 0, None)), floor))
        for q in range(nceps):
            scale = np.sqrt(1 / nfilt) if q == 0 else np.sqrt(2 / nfilt)
            out[q, t] = scale * np.sum(log_e * np.cos(np.pi * q * (2 * np.arange(nfilt) + 1)
                                                      / (2 * nfilt)))
    return out


class TestReadWav:
    def test_silence(self, tmp_path):
        p = tmp_path / "s.wav"
        _write_pcm(p, np.zeros(16000))
        w = read_wav(p)
        assert w.sample_rate == 16000 and len(w.samples) == 16000
        assert not np.any(w.samples)

    def test_full_scale(self, tmp_path):
        p = tmp_path / "f.wav"
        _write_pcm(p, [32767, -32768])
        w = read_wav(p)
        np.testing.assert_allclose(w.samples, [0.99997, -1.0], atol=1e-5)
        assert w.samples[0] == 32767 / 32768

    def test_stereo_rejected(self, tmp_path):
        p = tmp_path / "st.wav"
        _write_pcm(p, np.zeros(200), channels=2)
        with pytest.raises(FormatError):
            read_wav(p)

    def test_8bit_rejected(self, tmp_path):
        p = tmp_path / "b.wav"
        _write_pcm(p, np.zeros(100), width=1)
        with pytest.raises(FormatError):
            read_wav(p)

    def test_missing(self, tmp_path):
        with pytest.raises(FormatError):
            read_wav(tmp_path / "nope.wav")

    def test_not_a_wav(self, tmp_path):
        p = tmp_path / "x.wav"
        p.write_bytes(b"hello world")
        with pytest.raises(FormatError):
            read_wav(p)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(42)
        x = np.round(rng.uniform(-0.5, 0.5, 800) * 32768) / 32768
        write_wav(tmp_path / "r.wav", x, 16000)
        np.testing.assert_array_equal(read_wav(tmp_path / "r.wav").samples, x)


class TestLfcc:
    def test_frame_count_one_second(self):
        w = Waveform(np.random.default_rng(42).standard_normal(16000) * 0.1, 16000)
        assert lfcc(w).values.shape == (20, 98)
        assert extract(w).values.shape == (60, 98)

    def test_matches_explicit_reference(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal(1200) * 0.1 + 0.3 * np.sin(np.arange(1200) * 0.05)
        got = lfcc(Waveform(x, 16000)).values
        np.testing.assert_allclose(got, reference_lfcc(x), rtol=1e-9, atol=1e-9)

    def test_silence_frames_equal_and_finite(self):
        out = extract(Waveform(np.zeros(16000), 16000)).values
        assert np.all(np.isfinite(out))
        np.testing.assert_array_equal(out, out[:, :1].repeat(out.shape[1], axis=1))

    def test_constant_log_energy_only_c0(self):
        # silence hits the log floor in every band
        static = lfcc(Waveform(np.zeros(400), 16000)).values
        assert abs(static[0, 0]) > 1
        np.testing.assert_allclose(static[1:, 0], 0, atol=1e-12)

    def test_gain_shifts_only_c0(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal(4000) * 0.1
        a = lfcc(Waveform(x, 16000)).values
        b = lfcc(Waveform(3.0 * x, 16000)).values
        shift = b[0] - a[0]
        np.testing.assert_allclose(shift, np.log(9.0) * np.sqrt(70), atol=1e-6)
        np.testing.assert_allclose(b[1:], a[1:], atol=1e-6)

    def test_too_short(self):
        with pytest.raises(ContractError):
            lfcc(Waveform(np.zeros(399), 16000))

    def test_filterbank_triangles(self):
        bank = linear_filterbank(70, 512, 16000)
        assert bank.shape == (70, 257)
        assert np.all(bank.max(axis=1) > 0.5) and np.all(bank <= 1.0)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            LfccConfig(n_ceps=80)
        with pytest.raises(ConfigError):
            LfccConfig(window_ms=10, shift_ms=25)
        with pytest.raises(ConfigError):
            LfccConfig(fft_size=300)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 600), st.integers(1, 300))
def test_frame_count_formula(n, win, hop):
    if n < win:
        return
    starts = list(range(0, n - win + 1, hop))
    assert frame_count(n, win, hop) == len(starts)


class TestDeltas:
    def test_constant(self):
        out = deltas(np.full((20, 7), 3.0))
        np.testing.assert_array_equal(out[20:], 0)

    def test_single_frame(self):
        out = deltas(np.arange(20.0).reshape(20, 1))
        assert out.shape == (60, 1)
        np.testing.assert_array_equal(out[20:], 0)

    def test_ramp(self):
        out = deltas(np.tile(np.arange(12.0), (20, 1)), width=2)
        np.testing.assert_allclose(out[20:40, 2:-2], 1.0, rtol=1e-14)

    def test_hand_computed_edge(self):
        # c = [0, 1, 2] with edge replication -> padded [0, 0, 0, 1, 2, 2, 2]
        d = deltas(np.array([[0.0, 1.0, 2.0]]), width=2)[1]
        expected = [(1 * (1 - 0) + 2 * (2 - 0)) / 10, (1 * (2 - 0) + 2 * (2 - 0)) / 10,
                    (1 * (2 - 1) + 2 * (2 - 0)) / 10]
        np.testing.assert_allclose(d, expected, rtol=1e-14)

    def test_bad_shape(self):
        with pytest.raises(ContractError):
            deltas(np.zeros(5))


class TestFeatureFiles:
    def test_round_trip(self, tmp_path):
        x = np.random.default_rng(42).standard_normal((60, 13)).astype(np.float32)
        write_features(tmp_path / "a.lfcc", x)
        np.testing.assert_array_equal(read_features(tmp_path / "a.lfcc"), x)

    def test_layout(self, tmp_path):
        x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        write_features(tmp_path / "b.lfcc", x)
        raw = (tmp_path / "b.lfcc").read_bytes()
        assert raw[:4] == b"LFCC"
        assert struct.unpack("<II", raw[4:12]) == (2, 3)
        np.testing.assert_array_equal(np.frombuffer(raw[12:], "<f4"), [1, 2, 3, 4, 5, 6])

    def test_bad_magic(self, tmp_path):
        (tmp_path / "c.lfcc").write_bytes(b"XXXX" + struct.pack("<II", 1, 1) + b"\0" * 4)
        with pytest.raises(FormatError):
            read_features(tmp_path / "c.lfcc")

    def test_truncated(self, tmp_path):
        (tmp_path / "d.lfcc").write_bytes(b"LFCC" + struct.pack("<II", 2, 2) + b"\0" * 4)
        with pytest.raises(FormatError):
            read_features(tmp_path / "d.lfcc")
