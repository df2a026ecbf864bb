"""Additive background noise at a controlled SNR.

Power is the mean squared sample over the whole clean segment (no voice
activity gating). A mixture that would leave [-1, 1] is rescaled as a whole,
which keeps the clean/noise power ratio intact.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio_io import Waveform, load_wav, resample

WHITE, PINK = "white", "pink"


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit sub-seed from a base seed and arbitrary string keys."""
    h = hashlib.sha256(repr((int(seed),) + tuple(str(k) for k in keys)).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def power(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def snr_db(clean: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * np.log10(power(clean) / power(noise))


@dataclass(frozen=True, eq=False)
class Mixture:
    """Result of :func:`mix_at_snr`. ``clean + noise == mixed`` up to rounding."""

    mixed: Waveform
    clean: np.ndarray
    noise: np.ndarray
    noise_gain: float
    rescale: float

    @property
    def measured_snr_db(self) -> float:
        return snr_db(self.clean, self.noise)


def fit_noise(noise: np.ndarray, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Tile a short noise up to n samples, or cut an excerpt from a long one.

    The excerpt offset is drawn from ``rng`` (offset 0 when rng is None).
    """
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) < n:
        return np.resize(noise, n)
    start = 0 if rng is None or len(noise) == n else int(rng.integers(0, len(noise) - n + 1))
    return noise[start : start + n]


def mix_at_snr(clean: Waveform, noise: Waveform, snr: float,
               rng: np.random.Generator | None = None) -> Mixture:
    if noise.sample_rate_hz != clean.sample_rate_hz:
        noise = resample(noise, clean.sample_rate_hz)
    n = fit_noise(noise.samples, len(clean), rng)
    p_clean, p_noise = power(clean.samples), power(n)
    if p_clean == 0:
        raise ValueError("clean signal has zero power")
    if p_noise == 0:
        raise ValueError("noise signal has zero power")
    gain = float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr / 10.0))))
    s, d = clean.samples, gain * n
    mixed = s + d
    peak = float(np.max(np.abs(mixed)))
    rescale = 1.0 if peak <= 1.0 else 1.0 / peak
    if rescale != 1.0:
        s, d, mixed = s * rescale, d * rescale, mixed * rescale
    return Mixture(Waveform(mixed, clean.sample_rate_hz), s, d, gain, rescale)


def sample_snr(lo_db: float, hi_db: float, seed=None) -> float:
    """Uniform SNR draw in [lo_db, hi_db]; ``seed`` may be an int or a Generator."""
    if lo_db > hi_db:
        raise ValueError(f"empty SNR range [{lo_db}, {hi_db}]")
    if lo_db == hi_db:
        return float(lo_db)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return float(rng.uniform(lo_db, hi_db))


def gen_noise(kind: str, length: int, seed: int, sample_rate_hz: int = 16000) -> Waveform:
    """Seeded synthetic noise with peak amplitude 0.99.

    white: i.i.d. Gaussian. pink: Gaussian white noise shaped in the frequency
    domain by 1/sqrt(f) in amplitude (DC removed), i.e. a 1/f power density.
    """
    if length < 1:
        raise ValueError("noise length must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(length)
    if kind == PINK:
        spec = np.fft.rfft(x)
        f = np.arange(spec.size, dtype=np.float64)
        shape = np.zeros_like(f)
        shape[1:] = 1.0 / np.sqrt(f[1:])
        x = np.fft.irfft(spec * shape, n=length)
    elif kind != WHITE:
        raise ValueError(f"unknown noise kind {kind!r}")
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.99 * x / peak
    return Waveform(x, sample_rate_hz)


@dataclass
class NoiseMixSpec:
    """Where noise comes from: ``white``, ``pink``, or WAV file(s)/directory."""

    source: str | Sequence[str] = WHITE
    seed: int = 0
    _files: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.source, str) and self.source in (WHITE, PINK):
            return
        paths = [self.source] if isinstance(self.source, (str, os.PathLike)) else list(self.source)
        files = []
        for p in map(Path, paths):
            if p.is_dir():
                files.extend(sorted(p.glob("*.wav")))
            elif p.is_file():
                files.append(p)
            else:
                raise FileNotFoundError(f"noise source {p} does not exist")
        if not files:
            raise FileNotFoundError(f"no WAV files found in noise source {self.source!r}")
        self._files = files

    @property
    def kind(self) -> str:
        return "file" if self._files else str(self.source)

    def noise_for(self, utterance_id: str, n: int, sample_rate_hz: int):
        """Noise waveform and excerpt rng for one utterance, identical on every call."""
        rng = np.random.default_rng(derive_seed(self.seed, "noise", utterance_id))
        if not self._files:
            return gen_noise(self.kind, n, int(rng.integers(2**63)), sample_rate_hz), None
        path = self._files[int(rng.integers(len(self._files)))]
        return resample(load_wav(path), sample_rate_hz), rng

    def apply(self, utterance_id: str, clean: Waveform, snr: float) -> Mixture:
        noise, rng = self.noise_for(utterance_id, len(clean), clean.sample_rate_hz)
        return mix_at_snr(clean, noise, snr, rng)
