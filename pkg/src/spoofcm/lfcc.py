"""LFCC front end: PCM16 WAV -> 60 x L (static + delta + double-delta).

Also reads and writes the ``.lfcc`` feature file format:
magic ``b"LFCC"``, u32 rows, u32 cols, then rows*cols little-endian float32
values in row-major order.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.fft

from .errors import ConfigError, ContractError, FormatError

MAGIC = b"LFCC"
_HEADER = struct.Struct("<4sII")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ContractError("sample_rate must be positive")
        if len(self.samples) == 0:
            raise ContractError("waveform is empty")


@dataclass
class LfccConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    shift_ms: float = 10.0
    n_filters: int = 70
    n_ceps: int = 20
    fft_size: int = 512
    delta_width: int = 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_ceps > self.n_filters:
            raise ConfigError("n_ceps must not exceed n_filters", "lfcc.n_ceps")
        if not self.window_ms > self.shift_ms > 0:
            raise ConfigError("need window_ms > shift_ms > 0", "lfcc.window_ms")
        if self.fft_size & (self.fft_size - 1) or self.fft_size < self.win_length:
            raise ConfigError("fft_size must be a power of two >= the window length", "lfcc.fft_size")
        if self.delta_width < 1:
            raise ConfigError("must be >= 1", "lfcc.delta_width")

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.shift_ms / 1000.0))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LfccConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "lfcc")
        return cls(**d)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    utt_id: str = ""

    @property
    def frame_count(self) -> int:
        return self.values.shape[1]


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file, scaled to [-1, 1)."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: no such file")
    try:
        with wave.open(str(path), "rb") as wf:
            channels, width, rate = wf.getnchannels(), wf.getsampwidth(), wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a PCM WAV file ({exc})") from None
    if channels != 1:
        raise FormatError(f"{path}: expected mono audio, found {channels} channels")
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit samples, found {8 * width}-bit")
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def frame_count(n_samples: int, win: int, hop: int) -> int:
    return (n_samples - win) // hop + 1


def linear_filterbank(n_filters: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with centres spaced linearly from 0 Hz to Nyquist."""
    n_bins = fft_size // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    edges = np.linspace(0.0, sample_rate / 2.0, n_filters + 2)
    bank = np.zeros((n_filters, n_bins))
    for m in range(n_filters):
        lo, centre, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (centre - lo)
        falling = (hi - freqs) / (hi - centre)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    if np.any(bank.sum(axis=1) == 0):
        raise ConfigError("some filters cover no FFT bin; use a larger fft_size", "lfcc.n_filters")
    return bank


def lfcc(w: Waveform, cfg: Optional[LfccConfig] = None) -> FeatureMatrix:
    """Static LFCCs (``n_ceps x L``) of ``w``."""
    cfg = cfg or LfccConfig(sample_rate=w.sample_rate)
    if w.sample_rate != cfg.sample_rate:
        cfg = LfccConfig(**{**cfg.to_dict(), "sample_rate": w.sample_rate})
    win, hop = cfg.win_length, cfg.hop_length
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size < win:
        raise ContractError(f"audio has {x.size} samples, shorter than one {win}-sample window")
    n_frames = frame_count(x.size, win, hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    spectrum = np.abs(np.fft.rfft(frames * np.hamming(win), n=cfg.fft_size)) ** 2
    energies = spectrum @ linear_filterbank(cfg.n_filters, cfg.fft_size, cfg.sample_rate).T
    log_e = np.log(np.maximum(energies, cfg.log_floor))
    ceps = scipy.fft.dct(log_e, type=2, norm="ortho", axis=1)[:, :cfg.n_ceps]
    return FeatureMatrix(ceps.T.copy())


def deltas(static: np.ndarray, width: int = 2) -> np.ndarray:
    """Stack ``[static; delta; double-delta]`` using regression deltas.

    Edges are handled by repeating the first/last frame.
    """
    static = np.asarray(static, dtype=np.float64)
    if static.ndim != 2 or static.shape[1] < 1:
        raise ContractError(f"expected a D x L matrix with L >= 1, got {static.shape}")

    def delta(c):
        padded = np.pad(c, ((0, 0), (width, width)), mode="edge")
        length = c.shape[1]
        num = np.zeros_like(c)
        for k in range(1, width + 1):
            num += k * (padded[:, width + k:width + k + length] - padded[:, width - k:width - k + length])
        return num / (2.0 * sum(k * k for k in range(1, width + 1)))

    d1 = delta(static)
    return np.vstack([static, d1, delta(d1)])


def extract(w: Waveform, cfg: Optional[LfccConfig] = None, utt_id: str = "") -> FeatureMatrix:
    cfg = cfg or LfccConfig(sample_rate=w.sample_rate)
    full = deltas(lfcc(w, cfg).values, cfg.delta_width)
    return FeatureMatrix(full, utt_id)


# feature files ---------------------------------------------------------------

def write_features(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ContractError("feature matrix must be 2-D")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(values.tobytes())


def read_features(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"{path}: no such feature file") from None
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise FormatError(f"{path}: expected {rows * cols} floats, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float32)


def feature_path(feature_dir, utt_id: str) -> Path:
    return Path(feature_dir) / f"{utt_id}.lfcc"
