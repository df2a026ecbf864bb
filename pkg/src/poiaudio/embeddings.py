"""Utterance embeddings: baseline extractor, on-disk stores, external extractors.

Exchange format (text, UTF-8, one record per line)::

    <utterance-id> <dim> <v1> <v2> ... <vdim>

Values are written with ``repr`` so a write/read cycle is bit-exact. The
binary variant mirrors the feature dump: a little-endian header
(magic, count, dim) followed by, per record, a u16-length-prefixed UTF-8 id
and ``dim`` float32 values.
"""

from __future__ import annotations

import os
import shlex
import struct
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from .audio_io import Waveform, load_segment, write_wav
from .frontend import LOG_MEL, FeatureMatrix, FrontendConfig, log_mel


class EmbeddingError(Exception):
    pass


class DimensionMismatch(EmbeddingError):
    pass


class DuplicateId(EmbeddingError):
    pass


class StoreParseError(EmbeddingError):
    pass


class MissingEmbedding(EmbeddingError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing embedding"


class ExtractorTimeout(EmbeddingError):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("an embedding is a nonempty 1-d vector")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def l2_normalize(e: Embedding) -> Embedding:
    n = e.norm
    if n == 0 or not np.isfinite(n):
        raise ValueError("cannot normalise a zero (or non-finite) vector")
    return Embedding(e.values / n, normalized=True)


def as_embedding(x) -> Embedding:
    return x if isinstance(x, Embedding) else Embedding(x)


def baseline_embed(features: FeatureMatrix) -> Embedding:
    """Per-band mean, std and mean |frame delta|, L2-normalised (dim 3*bins).

    Deltas are circular (the last frame is differenced against the first),
    which makes every statistic invariant to whole-number tiling of the
    frame sequence.
    """
    if features.kind != LOG_MEL:
        raise ValueError("baseline_embed expects log-mel features")
    x = features.values
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 frames, got {x.shape[0]}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    delta = np.abs(np.roll(x, -1, axis=0) - x).mean(axis=0)
    return l2_normalize(Embedding(np.concatenate([mean, std, delta])))


class EmbeddingSource(Protocol):
    """Anything that maps manifest utterances to embeddings, deterministically."""

    name: str

    def embed(self, utterance_id: str, path: str | None) -> Embedding: ...


class WaveformSource(EmbeddingSource, Protocol):
    def embed_waveform(self, utterance_id: str, w: Waveform) -> Embedding: ...


@dataclass
class BaselineSource:
    frontend: FrontendConfig = FrontendConfig()
    sample_rate_hz: int = 16000
    segment_s: float = 4.0
    tile: bool = True
    name: str = "baseline"

    @property
    def dim(self) -> int:
        return 3 * self.frontend.n_mels

    def load(self, path) -> Waveform:
        return load_segment(path, self.sample_rate_hz, self.segment_s, self.tile)

    def embed_waveform(self, utterance_id: str, w: Waveform) -> Embedding:
        return baseline_embed(log_mel(w, self.frontend))

    def embed(self, utterance_id, path):
        if path is None:
            raise MissingEmbedding(f"{utterance_id}: no audio path")
        return self.embed_waveform(utterance_id, self.load(path))


@dataclass
class StoreSource:
    store: Mapping[str, Embedding]
    name: str = "store"

    def embed(self, utterance_id, path=None):
        try:
            return self.store[utterance_id]
        except KeyError:
            raise MissingEmbedding(f"no embedding stored for {utterance_id!r}") from None


# ---------------------------------------------------------------- stores

def format_record(utterance_id: str, e: Embedding) -> str:
    if not utterance_id or any(c.isspace() for c in utterance_id):
        raise ValueError(f"utterance id {utterance_id!r} is empty or contains whitespace")
    return " ".join([utterance_id, str(e.dim), *(repr(float(v)) for v in e.values)])


def write_embedding_store(path, store: Mapping[str, Embedding] | Iterable[tuple[str, Embedding]]) -> None:
    items = store.items() if isinstance(store, Mapping) else store
    with open(path, "w", encoding="utf-8") as fh:
        for uid, e in items:
            fh.write(format_record(uid, as_embedding(e)) + "\n")


def parse_embedding_lines(lines: Iterable[str], source: str = "<input>") -> dict[str, Embedding]:
    store: dict[str, Embedding] = {}
    dim = None
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields:
            continue
        where = f"{source}:{lineno}"
        if len(fields) < 2:
            raise StoreParseError(f"{where}: expected '<id> <dim> <values...>'")
        uid = fields[0]
        try:
            d = int(fields[1])
            values = np.array([float(v) for v in fields[2:]], dtype=np.float64)
        except ValueError as exc:
            raise StoreParseError(f"{where}: {exc}") from None
        if d < 1 or values.size != d:
            raise StoreParseError(f"{where}: declared dim {d} but found {values.size} values")
        if dim is None:
            dim = d
        elif d != dim:
            raise DimensionMismatch(f"{where}: record {uid!r} has dim {d}, store has dim {dim}")
        if uid in store:
            raise DuplicateId(f"{where}: duplicate utterance id {uid!r}")
        store[uid] = Embedding(values)
    return store


def load_embedding_store(path) -> dict[str, Embedding]:
    """Load a text (or binary, by magic) embedding file into an id -> Embedding map."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(_EMB_MAGIC))
    if head == _EMB_MAGIC:
        return read_embedding_binary(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise StoreParseError(f"{path}: not UTF-8 text ({exc})") from None
    return parse_embedding_lines(text.splitlines(), str(path))


_EMB_HEADER = struct.Struct("<4sII")
_EMB_MAGIC = b"PEM1"


def write_embedding_binary(path, store: Mapping[str, Embedding]) -> None:
    dims = {e.dim for e in store.values()}
    if len(dims) > 1:
        raise DimensionMismatch(f"store mixes dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as fh:
        fh.write(_EMB_HEADER.pack(_EMB_MAGIC, len(store), dim))
        for uid, e in store.items():
            raw = uid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(e.values.astype("<f4").tobytes())


def read_embedding_binary(path) -> dict[str, Embedding]:
    data = Path(path).read_bytes()
    try:
        magic, count, dim = _EMB_HEADER.unpack_from(data)
        pos = _EMB_HEADER.size
        store = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            uid = data[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            values = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
            pos += 4 * dim
            if uid in store:
                raise DuplicateId(f"{path}: duplicate utterance id {uid!r}")
            store[uid] = Embedding(values.astype(np.float64))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise StoreParseError(f"{path}: {exc}") from None
    if pos != len(data):
        raise StoreParseError(f"{path}: {len(data) - pos} trailing bytes")
    return store


# ---------------------------------------------------------------- external tools

_EXCHANGE_LOCKS: dict[str, threading.Lock] = {}
_LOCKS_GUARD = threading.Lock()


def _exchange_lock(directory: Path) -> threading.Lock:
    key = str(directory.resolve())
    with _LOCKS_GUARD:
        return _EXCHANGE_LOCKS.setdefault(key, threading.Lock())


@dataclass
class ExternalExtractor:
    """File-exchange bridge to an out-of-process embedding extractor.

    For each batch a request manifest ``request.tsv`` (``<id>\\t<wav path>``
    per line) is written to ``exchange_dir`` and ``command`` is run with
    ``{request}`` and ``{output}`` substituted. The tool must write the
    output file in the text exchange format. Calls that share an exchange
    directory are serialised.
    """

    command: str
    exchange_dir: str | os.PathLike
    dim: int | None = None
    timeout_s: float = 300.0
    name: str = "external"

    def extract_many(self, requests: Iterable[tuple[str, str | os.PathLike]]) -> dict[str, Embedding]:
        requests = [(uid, os.fspath(p)) for uid, p in requests]
        exchange = Path(self.exchange_dir)
        exchange.mkdir(parents=True, exist_ok=True)
        request_path, output_path = exchange / "request.tsv", exchange / "embeddings.txt"
        with _exchange_lock(exchange):
            with open(request_path, "w", encoding="utf-8") as fh:
                for uid, p in requests:
                    fh.write(f"{uid}\t{os.path.abspath(p)}\n")
            if output_path.exists():
                output_path.unlink()
            argv = [
                a.format(request=str(request_path), output=str(output_path))
                for a in shlex.split(self.command)
            ]
            try:
                subprocess.run(argv, check=True, timeout=self.timeout_s,
                               stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
            except subprocess.TimeoutExpired:
                raise ExtractorTimeout(f"extractor exceeded {self.timeout_s} s: {self.command}") from None
            except subprocess.CalledProcessError as exc:
                msg = exc.stderr.decode(errors="replace").strip()
                raise EmbeddingError(f"extractor exited with {exc.returncode}: {msg}") from None
            store = load_embedding_store(output_path) if output_path.exists() else {}

        out = {}
        for uid, _ in requests:
            if uid not in store:
                raise MissingEmbedding(f"extractor wrote no record for {uid!r}")
            e = store[uid]
            if self.dim is not None and e.dim != self.dim:
                raise DimensionMismatch(f"{uid!r}: extractor returned dim {e.dim}, run expects {self.dim}")
            out[uid] = e
        return out

    def extract(self, wav_path, utterance_id: str | None = None) -> Embedding:
        uid = utterance_id or Path(wav_path).stem
        return self.extract_many([(uid, wav_path)])[uid]


def external_extract(wav_path, exchange_dir, command: str, dim: int | None = None,
                     timeout_s: float = 300.0) -> Embedding:
    return ExternalExtractor(command, exchange_dir, dim, timeout_s).extract(wav_path)


@dataclass
class ExternalSource:
    """Embeds through an :class:`ExternalExtractor`.

    The tool always receives the canonical analysis segment (resampled,
    cut/tiled to ``segment_s``) written as float32 WAV into the exchange
    directory, never the original file.
    """

    extractor: ExternalExtractor
    sample_rate_hz: int = 16000
    segment_s: float = 4.0
    tile: bool = True
    name: str = "external"

    def load(self, path) -> Waveform:
        return load_segment(path, self.sample_rate_hz, self.segment_s, self.tile)

    def _stage(self, utterance_id: str, w: Waveform) -> Path:
        staged = Path(self.extractor.exchange_dir) / "audio"
        staged.mkdir(parents=True, exist_ok=True)
        wav = staged / f"{utterance_id}.wav"
        write_wav(wav, w.samples, w.sample_rate_hz)
        return wav

    def embed_waveform(self, utterance_id, w: Waveform) -> Embedding:
        return self.extractor.extract(self._stage(utterance_id, w), utterance_id)

    def embed(self, utterance_id, path):
        return self.embed_waveform(utterance_id, self.load(path))

    def embed_many(self, items: Iterable[tuple[str, str]]) -> dict[str, Embedding]:
        """One extractor invocation for the whole batch."""
        staged = [(uid, self._stage(uid, self.load(p))) for uid, p in items]
        return self.extractor.extract_many(staged)
