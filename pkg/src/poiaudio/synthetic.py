"""Seeded synthetic-speaker corpus for end-to-end checks without real data.

A speaker is a fundamental frequency plus a harmonic amplitude profile (a
spectral envelope built from three resonances and a tilt). Real utterances
vary pitch contour, phases, loudness envelope, duration and carry a little
noise. A fake claiming speaker p keeps p's pitch, but its envelope parameters
are pulled halfway (by default) towards a donor speaker's, like a voice clone
that gets the timbre only partly right.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .audio_io import write_wav
from .augmentation import derive_seed
from .protocol import FAKE, REAL, ManifestEntry, write_manifest


@dataclass(frozen=True)
class Signature:
    f0_hz: float
    formants_hz: tuple[float, float, float]
    bandwidths_hz: tuple[float, float, float]
    gains: tuple[float, float, float]
    tilt_hz: float

    def envelope(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        env = 0.08 * np.exp(-f / self.tilt_hz)
        for fc, bw, g in zip(self.formants_hz, self.bandwidths_hz, self.gains):
            env = env + g * np.exp(-0.5 * ((f - fc) / bw) ** 2)
        return env

    def blend(self, other: "Signature", weight_other: float) -> "Signature":
        mix = lambda a, b: tuple(float((1 - weight_other) * x + weight_other * y) for x, y in zip(a, b))
        return Signature(
            self.f0_hz, mix(self.formants_hz, other.formants_hz), mix(self.bandwidths_hz, other.bandwidths_hz),
            mix(self.gains, other.gains), float((1 - weight_other) * self.tilt_hz + weight_other * other.tilt_hz),
        )


def draw_signature(rng: np.random.Generator) -> Signature:
    return Signature(
        f0_hz=float(rng.uniform(90.0, 240.0)),
        formants_hz=(float(rng.uniform(300, 900)), float(rng.uniform(1000, 2400)), float(rng.uniform(2500, 3600))),
        bandwidths_hz=tuple(float(b) for b in rng.uniform(90, 260, size=3)),
        gains=(1.0, float(rng.uniform(0.3, 0.9)), float(rng.uniform(0.1, 0.5))),
        tilt_hz=float(rng.uniform(600, 1500)),
    )


def synthesize(sig: Signature, rng: np.random.Generator, sample_rate_hz: int = 16000,
               duration_s: float = 3.0, noise_db: float = -40.0, fmax_hz: float = 7000.0) -> np.ndarray:
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    vib_rate, vib_depth = rng.uniform(4.0, 6.5), rng.uniform(0.005, 0.02)
    drift = rng.uniform(-0.06, 0.06)
    f0 = sig.f0_hz * rng.uniform(0.96, 1.04) * (1 + drift * t / max(duration_s, 1e-9))
    f0 = f0 * (1 + vib_depth * np.sin(2 * np.pi * vib_rate * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate_hz
    formant_jitter = rng.uniform(0.97, 1.03, size=3)
    local = Signature(sig.f0_hz, tuple(np.array(sig.formants_hz) * formant_jitter),
                      sig.bandwidths_hz, sig.gains, sig.tilt_hz)

    n_harm = int(fmax_hz // (sig.f0_hz * 1.1))
    # harmonic amplitudes change slowly: hold them over 32-sample blocks
    block = 32
    coarse = np.arange(0, n, block)
    base = np.exp(1j * phase)
    rot = np.ones(n, dtype=np.complex128)
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        rot *= base
        amp = np.repeat(local.envelope(h * f0[coarse]), block)[:n]
        x += amp * (rot * np.exp(1j * rng.uniform(0, 2 * np.pi))).imag

    syll_rate = rng.uniform(2.5, 5.0)
    loud = 0.55 + 0.45 * np.sin(2 * np.pi * syll_rate * t + rng.uniform(0, 2 * np.pi)) ** 2
    x *= loud
    x /= np.sqrt(np.mean(x**2))
    x += 10 ** (noise_db / 20) * rng.standard_normal(n)
    return 0.5 * x / np.max(np.abs(x))


def generate_synthetic_corpus(out_dir, n_speakers: int = 10, utts_per_speaker: int = 20,
                              fakes_per_speaker: int = 10, seed: int = 0,
                              sample_rate_hz: int = 16000, mimicry: float = 0.5,
                              duration_range_s: tuple[float, float] = (2.5, 4.5)) -> list[ManifestEntry]:
    """Write WAVs, ``manifest.csv`` and ``signatures.json`` under ``out_dir``.

    ``mimicry`` is the weight of the claimed speaker in a fake's envelope
    (0 = pure donor). Output is byte-identical for identical arguments.
    """
    if n_speakers < 2:
        raise ValueError("need at least 2 speakers so fakes have a donor identity")
    if not 0 <= mimicry < 1:
        raise ValueError("mimicry must lie in [0, 1)")
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(derive_seed(seed, "speakers"))
    speakers = {f"spk{i:03d}": draw_signature(master) for i in range(n_speakers)}
    names = sorted(speakers)

    entries, meta = [], {"speakers": {k: asdict(v) for k, v in speakers.items()}, "utterances": {}}

    def emit(uid, spk, label, sig, donor=None):
        rng = np.random.default_rng(derive_seed(seed, "utt", uid))
        dur = rng.uniform(*duration_range_s)
        x = synthesize(sig, rng, sample_rate_hz, dur)
        rel = Path("audio") / f"{uid}.wav"
        write_wav(out / rel, x, sample_rate_hz, "float32")
        entries.append(ManifestEntry(uid, spk, label, str(out / rel)))
        meta["utterances"][uid] = {"speaker": spk, "label": label, "donor": donor, "signature": asdict(sig)}

    for spk in names:
        for j in range(utts_per_speaker):
            emit(f"{spk}_real{j:03d}", spk, REAL, speakers[spk])
        pick = np.random.default_rng(derive_seed(seed, "donors", spk))
        others = [s for s in names if s != spk]
        for j in range(fakes_per_speaker):
            donor = others[int(pick.integers(len(others)))]
            sig = speakers[spk].blend(speakers[donor], 1.0 - mimicry)
            emit(f"{spk}_fake{j:03d}", spk, FAKE, sig, donor)

    write_manifest(out / "manifest.csv", entries, relative_to=out)
    with open(out / "signatures.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return entries
