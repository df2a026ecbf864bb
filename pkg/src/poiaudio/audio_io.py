"""WAV decoding, resampling and fixed-length segmentation.

Only uncompressed RIFF/WAVE is handled: 16-bit PCM and 32-bit IEEE float,
any channel count. Everything downstream works on mono float64 samples in
[-1, 1] at a single canonical rate.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

CANONICAL_RATE = 16000

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class AudioError(Exception):
    """Base class for audio decoding failures."""


class AudioFileNotFound(AudioError, FileNotFoundError):
    pass


class MalformedContainer(AudioError):
    pass


class UnsupportedCodec(AudioError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def _read_chunks(data: bytes):
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedContainer("malformed container: missing RIFF/WAVE header")
    pos = 12
    chunks = {}
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise MalformedContainer(f"malformed container: truncated {cid!r} chunk")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    return chunks


def load_wav(path) -> Waveform:
    """Decode a WAV file into a mono waveform scaled to [-1, 1].

    Multi-channel audio is averaged to mono. PCM16 is scaled by 1/32768;
    float files are clipped to [-1, 1].
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise AudioFileNotFound(f"no such audio file: {path}")
    with open(path, "rb") as fh:
        data = fh.read()

    chunks = _read_chunks(data)
    fmt = chunks.get(b"fmt ")
    if fmt is None or len(fmt) < 16:
        raise MalformedContainer("malformed container: missing or short fmt chunk")
    if b"data" not in chunks:
        raise MalformedContainer("malformed container: missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels < 1 or rate < 1:
        raise MalformedContainer("malformed container: bad channel count or sample rate")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodec(f"unsupported codec: format tag {tag:#06x}, {bits} bits")

    raw = chunks[b"data"]
    frame_bytes = dtype.itemsize * channels
    n_frames = len(raw) // frame_bytes
    if n_frames < 1:
        raise MalformedContainer("malformed container: no complete sample frames")
    pcm = np.frombuffer(raw[: n_frames * frame_bytes], dtype=dtype)
    frames = pcm.reshape(n_frames, channels).astype(np.float64) * scale
    mono = frames.mean(axis=1)
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        mono = np.clip(np.nan_to_num(mono), -1.0, 1.0)
    return Waveform(mono, int(rate))


def write_wav(path, samples, sample_rate_hz: int, subtype: str = "float32") -> None:
    """Write a WAV file. ``samples`` is (n,) or (n, channels)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    if subtype == "pcm16":
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif subtype == "float32":
        payload = x.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    block_align = channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, channels, sample_rate_hz, sample_rate_hz * block_align, block_align, bits
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Band-limited rate conversion.

    Uses a polyphase FIR (Kaiser-windowed sinc, beta=5, scipy defaults) at the
    reduced rational ratio. Output length is ceil(n * target / source), so the
    duration is preserved to within one output sample.
    """
    if target_hz <= 0:
        raise ValueError(f"target sample rate must be positive, got {target_hz}")
    if target_hz == w.sample_rate_hz:
        return w
    ratio = Fraction(target_hz, w.sample_rate_hz)
    y = signal.resample_poly(w.samples, ratio.numerator, ratio.denominator)
    return Waveform(y, int(target_hz))


def take_segment(w: Waveform, duration_s: float, tile: bool = True) -> Waveform:
    """Return the leading ``duration_s`` seconds.

    Shorter inputs are tile-repeated to the requested length, or zero-padded
    when ``tile`` is False.
    """
    if not duration_s > 0:
        raise ValueError(f"segment duration must be positive, got {duration_s}")
    n = max(1, int(round(duration_s * w.sample_rate_hz)))
    x = w.samples
    if len(x) >= n:
        out = x[:n]
    elif tile:
        out = np.resize(x, n)
    else:
        out = np.concatenate([x, np.zeros(n - len(x))])
    return Waveform(out.copy(), w.sample_rate_hz)


def load_segment(path, sample_rate_hz: int = CANONICAL_RATE, duration_s: float = 4.0,
                 tile: bool = True) -> Waveform:
    """load_wav -> resample -> take_segment, the canonical analysis input."""
    w = resample(load_wav(path), sample_rate_hz)
    return take_segment(w, duration_s, tile=tile)

