"""Spectrogram and log-mel front-ends.

Framing follows the usual speaker-verification setup: 25 ms Hann windows,
10 ms hop, 512-point FFT at 16 kHz. Frames are taken without centering or
padding, so an input of N samples yields 1 + floor((N - win) / hop) frames.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .audio_io import Waveform

POWER = "power-spectrogram"
LOG_MEL = "log-mel"

# named front-ends of the verification systems this pipeline feeds
PRESETS = {
    "40-MelSpec": dict(n_mels=40),
    "64-MelSpec": dict(n_mels=64),
    "80-MelSpec": dict(n_mels=80),
    "257-Spec": dict(n_mels=0),
}


@dataclass(frozen=True)
class FrontendConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    n_mels: int = 64
    fmin_hz: float = 0.0
    fmax_hz: float | None = None
    log_floor: float = 1e-10

    @classmethod
    def preset(cls, name: str, **overrides) -> "FrontendConfig":
        return cls(**{**PRESETS[name], **overrides})

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.window_ms * sample_rate_hz / 1000.0))

    def hop_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_ms * sample_rate_hz / 1000.0))

    def upper_hz(self, sample_rate_hz: int) -> float:
        return sample_rate_hz / 2.0 if self.fmax_hz is None else float(self.fmax_hz)

    def validate(self, sample_rate_hz: int) -> None:
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("window_ms and hop_ms must be positive")
        win, hop = self.window_samples(sample_rate_hz), self.hop_samples(sample_rate_hz)
        if win < 1 or hop < 1:
            raise ValueError("window and hop must span at least one sample")
        if self.fft_size < win:
            raise ValueError(f"fft_size {self.fft_size} is shorter than the window ({win} samples)")
        if self.n_mels < 0:
            raise ValueError("n_mels must be nonnegative")
        if not 0 <= self.fmin_hz < self.upper_hz(sample_rate_hz) <= sample_rate_hz / 2:
            raise ValueError("need 0 <= fmin_hz < fmax_hz <= sample_rate/2")
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray  # frames x bins
    kind: str

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


def frame_count(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 0
    return 1 + (n_samples - window) // hop


def hann(n: int) -> np.ndarray:
    # periodic Hann, the STFT convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    n = frame_count(len(x), window, hop)
    idx = np.arange(window)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def stft_power(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> FeatureMatrix:
    """Magnitude-squared DFT of Hann-windowed frames, fft_size/2 + 1 bins.

    No 1/N scaling: a frame's bins, with interior bins counted twice, sum to
    fft_size times the windowed-frame energy.
    """
    sr = w.sample_rate_hz
    cfg.validate(sr)
    win, hop = cfg.window_samples(sr), cfg.hop_samples(sr)
    if len(w) < win:
        raise ValueError(f"input of {len(w)} samples is shorter than one window ({win})")
    frames = frame_signal(w.samples, win, hop) * hann(win)
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return FeatureMatrix(spec.real**2 + spec.imag**2, POWER)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def _filterbank(n_mels, fft_size, sample_rate_hz, fmin_hz, fmax_hz):
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (centre - lo)
    falling = (hi - freqs) / (hi - centre)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"{n_mels} mel bands are too many for a {fft_size}-point FFT at {sample_rate_hz} Hz "
            f"(band {int(empty[0])} covers no FFT bin)"
        )
    fb.setflags(write=False)
    return fb


def mel_filterbank(n_mels: int, fft_size: int, sample_rate_hz: int,
                   fmin_hz: float = 0.0, fmax_hz: float | None = None) -> np.ndarray:
    """Triangular filters, centres evenly spaced on the HTK mel scale.

    Returns an ``(n_mels, fft_size // 2 + 1)`` read-only matrix of unnormalised
    (peak <= 1) weights.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")
    fmax = sample_rate_hz / 2.0 if fmax_hz is None else fmax_hz
    if not 0 <= fmin_hz < fmax <= sample_rate_hz / 2:
        raise ValueError("need 0 <= fmin_hz < fmax_hz <= sample_rate/2")
    return _filterbank(int(n_mels), int(fft_size), int(sample_rate_hz), float(fmin_hz), float(fmax))


def log_mel(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> FeatureMatrix:
    if cfg.n_mels < 1:
        raise ValueError("log_mel needs n_mels >= 1")
    power = stft_power(w, cfg).values
    fb = mel_filterbank(cfg.n_mels, cfg.fft_size, w.sample_rate_hz, cfg.fmin_hz,
                        cfg.upper_hz(w.sample_rate_hz))
    return FeatureMatrix(np.log(np.maximum(power @ fb.T, cfg.log_floor)), LOG_MEL)


def compute_features(w: Waveform, cfg: FrontendConfig) -> FeatureMatrix:
    """n_mels == 0 selects the linear power spectrogram."""
    return stft_power(w, cfg) if cfg.n_mels == 0 else log_mel(w, cfg)


# Feature dump: little-endian header then row-major float32 values.
_FEAT_HEADER = struct.Struct("<4sIIB3x")
_FEAT_MAGIC = b"PFM1"
_KIND_CODES = {POWER: 0, LOG_MEL: 1}


def write_features(path, fm: FeatureMatrix) -> None:
    header = _FEAT_HEADER.pack(_FEAT_MAGIC, fm.frames, fm.bins, _KIND_CODES[fm.kind])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(fm.values, dtype="<f4").tobytes())


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _FEAT_HEADER.size:
        raise ValueError(f"{path}: truncated feature header")
    magic, frames, bins, code = _FEAT_HEADER.unpack_from(data)
    if magic != _FEAT_MAGIC:
        raise ValueError(f"{path}: not a feature dump")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise ValueError(f"{path}: unknown feature kind code {code}")
    values = np.frombuffer(data, dtype="<f4", offset=_FEAT_HEADER.size)
    if values.size != frames * bins:
        raise ValueError(f"{path}: expected {frames * bins} values, found {values.size}")
    return FeatureMatrix(values.reshape(frames, bins).astype(np.float64), kinds[code])
