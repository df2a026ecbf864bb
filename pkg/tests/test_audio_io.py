import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from poiaudio.audio_io import (AudioFileNotFound, MalformedContainer, UnsupportedCodec, Waveform, load_segment,
                               load_wav, resample, take_segment, write_wav)


def _raw_wav(path, tag, channels, rate, bits, payload):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    return path


def test_pcm16_full_scale(tmp_path):
    p = _raw_wav(tmp_path / "a.wav", 1, 1, 16000, 16, struct.pack("<h", 32767))
    w = load_wav(p)
    assert w.sample_rate_hz == 16000
    assert w.samples.tolist() == [32767 / 32768]


def test_stereo_is_averaged(tmp_path):
    p = _raw_wav(tmp_path / "s.wav", 3, 2, 8000, 32, struct.pack("<ff", 1.0, -1.0))
    assert load_wav(p).samples.tolist() == [0.0]


def test_float_roundtrip(tmp_path, rng):
    x = rng.uniform(-1, 1, 1000).astype(np.float32).astype(np.float64)
    write_wav(tmp_path / "f.wav", x, 22050)
    w = load_wav(tmp_path / "f.wav")
    assert w.sample_rate_hz == 22050 and np.array_equal(w.samples, x)


def test_pcm16_roundtrip_odd_length(tmp_path):
    x = np.array([0.0, 0.5, -0.5])
    write_wav(tmp_path / "p.wav", x, 16000, "pcm16")
    assert np.array_equal(load_wav(tmp_path / "p.wav").samples, x)


def test_missing_file(tmp_path):
    with pytest.raises(AudioFileNotFound):
        load_wav(tmp_path / "nope.wav")


@pytest.mark.parametrize("data", [b"RIFF\x10\x00", b"RIFX0000WAVEfmt ", b"RIFF\x00\x00\x00\x00WAVEfmt \x10\x00\x00\x00\x01\x00"])
def test_malformed_header(tmp_path, data):
    p = tmp_path / "bad.wav"
    p.write_bytes(data)
    with pytest.raises(MalformedContainer, match="malformed container"):
        load_wav(p)


def test_unsupported_codec(tmp_path):
    p = _raw_wav(tmp_path / "u.wav", 1, 1, 16000, 8, b"\x80\x80")
    with pytest.raises(UnsupportedCodec):
        load_wav(p)
    p = _raw_wav(tmp_path / "alaw.wav", 6, 1, 8000, 8, b"\x00")
    with pytest.raises(UnsupportedCodec):
        load_wav(p)


def test_resample_identity():
    w = Waveform(np.arange(10) / 10, 16000)
    assert resample(w, 16000).samples.tolist() == w.samples.tolist()


def test_resample_rejects_zero():
    with pytest.raises(ValueError):
        resample(Waveform([0.0], 16000), 0)


def test_resample_length():
    w = Waveform(np.zeros(8000), 8000)
    assert abs(len(resample(w, 16000)) - 16000) <= 1


def test_resample_keeps_sine_frequency():
    t = np.arange(4800) / 48000
    w = Waveform(0.5 * np.sin(2 * np.pi * 1000 * t), 48000)
    y = resample(w, 16000)
    # short excerpts keep the O(n^2) oracle cheap; 480 samples at 48 kHz = 160 at 16 kHz = 10 ms
    f_in = oracles.peak_frequency(w.samples[2400:2880].tolist(), 48000)
    f_out = oracles.peak_frequency(y.samples[800:960].tolist(), 16000)
    assert f_in == f_out == 1000.0


@given(st.floats(-10, 10).filter(lambda a: abs(a) > 1e-3))
@settings(max_examples=20)
def test_resample_linear(a):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 3000)
    base = resample(Waveform(x, 44100), 16000).samples
    scaled = resample(Waveform(a * x, 44100), 16000).samples
    assert np.allclose(scaled, a * base, rtol=1e-6, atol=1e-12)


def test_take_segment_examples():
    sr = 16000
    long = Waveform(np.arange(10 * sr) % 7 / 7, sr)
    assert np.array_equal(take_segment(long, 4.0).samples, long.samples[:64000])
    four = Waveform(np.linspace(-1, 1, 4 * sr), sr)
    assert np.array_equal(take_segment(four, 4.0).samples, four.samples)
    short = Waveform(np.linspace(-1, 1, 24000), sr)
    seg = take_segment(short, 4.0).samples
    assert len(seg) == 64000
    assert np.array_equal(seg, np.concatenate([short.samples, short.samples, short.samples[:16000]]))


def test_take_segment_zero_pad_option():
    seg = take_segment(Waveform([0.5, 0.5], 10), 0.5, tile=False).samples
    assert seg.tolist() == [0.5, 0.5, 0.0, 0.0, 0.0]


@given(st.integers(1, 5000), st.floats(0.01, 1.0))
def test_take_segment_idempotent(n, dur):
    w = Waveform(np.sin(np.arange(n)), 8000)
    once = take_segment(w, dur)
    assert np.array_equal(take_segment(once, dur).samples, once.samples)


@pytest.mark.parametrize("rate, n", [(8000, 1), (11025, 12345), (22050, 200000), (44100, 44100 * 5), (16000, 7)])
def test_pipeline_gives_64000_samples(tmp_path, rate, n):
    x = np.random.default_rng(rate).uniform(-0.5, 0.5, n)
    write_wav(tmp_path / "x.wav", x, rate)
    assert len(load_segment(tmp_path / "x.wav")) == 64000


def test_waveform_rejects_bad_rate():
    with pytest.raises(ValueError):
        Waveform([0.0], 0)
