"""Manifests, reference-set policies and the experiment drivers.

Every utterance in a manifest is tested against the real utterances of its
(claimed) speaker. Two policies pick those references:

* ``leave-one-out``: all real utterances of the speaker except the one under
  test. Fakes are compared against the full real set.
* ``fixed-list``: a seed-determined subset of ``fixed_size`` real utterances
  per speaker (or an explicit id list), shared by all of that speaker's test
  items. Reference utterances are not tested.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .augmentation import NoiseMixSpec, derive_seed
from .embeddings import Embedding, EmbeddingError, l2_normalize
from .metrics import LabeledScores, MetricsReport, TdcfCosts, auc, evaluate
from .verification import FAKE, REAL, Metric, ReferenceSet, ScoreRecord, Strategy, score

log = logging.getLogger(__name__)

LEAVE_ONE_OUT = "leave-one-out"
FIXED_LIST = "fixed-list"
MANIFEST_COLUMNS = ["utterance_id", "speaker_id", "label", "path"]


class ProtocolError(Exception):
    """Data problem tied to specific utterances (listed in ``ids``)."""

    def __init__(self, message: str, ids: Sequence[str] = ()):
        self.ids = list(ids)
        if self.ids:
            shown = ", ".join(self.ids[:10]) + (" ..." if len(self.ids) > 10 else "")
            message = f"{message}: {shown}"
        super().__init__(message)


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    speaker_id: str
    label: str
    path: str | None = None


def validate_manifest(entries: Sequence[ManifestEntry]) -> None:
    seen, dupes, bad = set(), [], []
    for e in entries:
        if e.utterance_id in seen:
            dupes.append(e.utterance_id)
        seen.add(e.utterance_id)
        if e.label not in (REAL, FAKE) or not e.speaker_id:
            bad.append(e.utterance_id)
    if dupes:
        raise ProtocolError("duplicate utterance ids in manifest", dupes)
    if bad:
        raise ProtocolError("entries need a speaker id and a label in {real, fake}", bad)


def read_manifest(path) -> list[ManifestEntry]:
    """Read ``utterance_id,speaker_id,label,path``; relative paths resolve against the file."""
    path = Path(path)
    base = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ProtocolError(f"{path}: manifest lacks columns {sorted(missing)}")
        entries = []
        for row in reader:
            p = (row.get("path") or "").strip() or None
            if p is not None and not os.path.isabs(p):
                p = str(base / p)
            entries.append(ManifestEntry(row["utterance_id"].strip(), row["speaker_id"].strip(),
                                         row["label"].strip().lower(), p))
    validate_manifest(entries)
    return entries


def write_manifest(path, entries: Iterable[ManifestEntry], relative_to=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            p = e.path or ""
            if p and relative_to is not None:
                p = os.path.relpath(p, relative_to)
            w.writerow([e.utterance_id, e.speaker_id, e.label, p])


def reals_by_speaker(manifest: Iterable[ManifestEntry]) -> dict[str, list[str]]:
    out = defaultdict(list)
    for e in manifest:
        if e.label == REAL:
            out[e.speaker_id].append(e.utterance_id)
    return {k: sorted(v) for k, v in out.items()}


# ---------------------------------------------------------------- reference policies

@dataclass(frozen=True)
class ReferencePolicy:
    kind: str = LEAVE_ONE_OUT
    fixed_size: int = 10
    fixed_ids: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (LEAVE_ONE_OUT, FIXED_LIST):
            raise ValueError(f"unknown reference policy {self.kind!r}")
        if self.fixed_size < 1:
            raise ValueError("fixed_size must be >= 1")
        if self.fixed_ids is not None:
            object.__setattr__(self, "fixed_ids", tuple(self.fixed_ids))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fixed_ids"] = list(self.fixed_ids) if self.fixed_ids is not None else None
        return d


def speaker_order(real_ids: Sequence[str], seed: int, speaker: str, purpose: str) -> list[str]:
    """Seeded permutation of a speaker's real ids, independent of manifest order."""
    ids = sorted(real_ids)
    rng = np.random.default_rng(derive_seed(seed, purpose, speaker))
    return [ids[i] for i in rng.permutation(len(ids))]


def fixed_references(manifest: Sequence[ManifestEntry], policy: ReferencePolicy) -> dict[str, tuple[str, ...]]:
    reals = reals_by_speaker(manifest)
    if policy.fixed_ids is not None:
        by_id = {e.utterance_id: e for e in manifest}
        unknown = [u for u in policy.fixed_ids if u not in by_id or by_id[u].label != REAL]
        if unknown:
            raise ProtocolError("fixed reference ids are not real utterances of the manifest", unknown)
        out = defaultdict(list)
        for u in policy.fixed_ids:
            out[by_id[u].speaker_id].append(u)
        return {k: tuple(sorted(v)) for k, v in out.items()}
    return {
        spk: tuple(sorted(speaker_order(ids, policy.seed, spk, "fixed-list")[: policy.fixed_size]))
        for spk, ids in reals.items()
        if len(ids) >= policy.fixed_size
    }


def reference_ids(manifest: Sequence[ManifestEntry], policy: ReferencePolicy) -> dict[tuple[str, str], tuple[str, ...]]:
    """(speaker, test utterance) -> reference utterance ids, for every test item.

    Raises ProtocolError listing the test items whose identity has no usable
    references.
    """
    validate_manifest(manifest)
    out, orphans = {}, []
    if policy.kind == LEAVE_ONE_OUT:
        reals = reals_by_speaker(manifest)
        for e in manifest:
            refs = tuple(u for u in reals.get(e.speaker_id, ()) if u != e.utterance_id)
            if not refs:
                orphans.append(e.utterance_id)
            out[(e.speaker_id, e.utterance_id)] = refs
    else:
        fixed = fixed_references(manifest, policy)
        ref_pool = {u for ids in fixed.values() for u in ids}
        for e in manifest:
            if e.utterance_id in ref_pool:
                continue
            refs = fixed.get(e.speaker_id, ())
            if not refs:
                orphans.append(e.utterance_id)
            out[(e.speaker_id, e.utterance_id)] = refs
    if orphans:
        raise ProtocolError("no usable reference utterances for", sorted(orphans))
    return out


def build_reference_sets(manifest: Sequence[ManifestEntry], policy: ReferencePolicy,
                         embeddings: Mapping[str, Embedding]) -> dict[tuple[str, str], ReferenceSet]:
    cache: dict[tuple[str, ...], ReferenceSet] = {}
    out = {}
    for (spk, uid), ids in reference_ids(manifest, policy).items():
        if ids not in cache:
            cache[ids] = ReferenceSet(spk, tuple(embeddings[i] for i in ids), ids)
        out[(spk, uid)] = cache[ids]
    return out


# ---------------------------------------------------------------- embedding resolution

def embed_manifest(entries: Sequence[ManifestEntry], source, workers: int = 1,
                   normalize: bool = False,
                   transform: Callable | None = None) -> dict[str, Embedding]:
    """Embed every entry. ``transform(entry, waveform)`` may alter audio first.

    Failures are collected and raised together as one ProtocolError.
    """
    def one(e: ManifestEntry):
        try:
            if transform is None:
                emb = source.embed(e.utterance_id, e.path)
            else:
                emb = source.embed_waveform(e.utterance_id, transform(e, source.load(e.path)))
            return e.utterance_id, (l2_normalize(emb) if normalize else emb), None
        except (EmbeddingError, OSError, ValueError) as exc:
            return e.utterance_id, None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, entries))
    else:
        results = [one(e) for e in entries]

    failed = [(uid, exc) for uid, _, exc in results if exc is not None]
    if failed:
        for uid, exc in failed[:5]:
            log.error("%s: %s", uid, exc)
        raise ProtocolError("could not embed", [uid for uid, _ in failed])
    out = {uid: emb for uid, emb, _ in results}
    dims = {e.dim for e in out.values()}
    if len(dims) > 1:
        raise ProtocolError(f"embedding dims differ within one run: {sorted(dims)}")
    return out


def resolve_normalize(normalize, metric: Metric) -> bool:
    """``None``/"auto": unit-normalise for cosine, keep raw vectors for Euclidean."""
    if normalize in (None, "auto"):
        return Metric.parse(metric) is Metric.COSINE
    return bool(normalize)


# ---------------------------------------------------------------- scoring and reports

def score_tests(manifest: Sequence[ManifestEntry], refsets: Mapping[tuple[str, str], ReferenceSet],
                test_embeddings: Mapping[str, Embedding], metric: Metric,
                strategies: Sequence[Strategy]) -> list[ScoreRecord]:
    records = []
    for e in sorted(manifest, key=lambda e: e.utterance_id):
        rs = refsets.get((e.speaker_id, e.utterance_id))
        if rs is None:
            continue
        x = test_embeddings[e.utterance_id]
        for s in strategies:
            records.append(ScoreRecord(e.utterance_id, e.speaker_id, e.label, s.value, metric.value,
                                       score(x, rs, s, metric)))
    return records


def labeled(records: Iterable[ScoreRecord], strategy: Strategy) -> LabeledScores:
    real = [r.score for r in records if r.strategy == strategy.value and r.label == REAL]
    fake = [r.score for r in records if r.strategy == strategy.value and r.label == FAKE]
    if not real or not fake:
        raise ProtocolError(f"strategy {strategy.value} needs both real and fake test scores")
    return LabeledScores(real, fake)


def fingerprint(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ExperimentReport:
    config: dict
    metrics: dict[str, MetricsReport] = field(default_factory=dict)
    records: list[ScoreRecord] = field(default_factory=list)
    curves: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.config)

    def to_dict(self, timestamp: str | None = None) -> dict:
        d = {
            "config": self.config,
            "config_fingerprint": self.fingerprint,
            "metrics": {k: v.to_dict() for k, v in sorted(self.metrics.items())},
            "curves": {k: [[x, y] for x, y in v] for k, v in sorted(self.curves.items())},
            "n_records": len(self.records),
            "warnings": list(self.warnings),
        }
        if timestamp is not None:
            d["timestamp"] = timestamp
        return d


def run_evaluation(manifest: Sequence[ManifestEntry], policy: ReferencePolicy, source,
                   metric: Metric | str = Metric.COSINE,
                   strategies: Sequence[Strategy | str] = (Strategy.CB, Strategy.MS),
                   costs: TdcfCosts = TdcfCosts(), normalize=None, workers: int = 1,
                   embeddings: Mapping[str, Embedding] | None = None,
                   config: dict | None = None) -> ExperimentReport:
    """Score every test item of ``manifest`` with each strategy and summarise.

    ``embeddings`` (already normalised as desired) short-circuits ``source``.
    """
    metric = Metric.parse(metric)
    strategies = Strategy.parse_many(strategies)
    ref_ids = reference_ids(manifest, policy)
    if embeddings is None:
        embeddings = embed_manifest(manifest, source, workers, resolve_normalize(normalize, metric))
    refsets = build_reference_sets(manifest, policy, embeddings)
    records = score_tests(manifest, refsets, embeddings, metric, strategies)
    report = ExperimentReport(config=dict(config or {}), records=records)
    for s in strategies:
        report.metrics[s.value] = evaluate(labeled(records, s), costs)
    assert len(records) == len(ref_ids) * len(strategies)
    return report


def sweep_references(manifest: Sequence[ManifestEntry], size: int, seed: int = 0
                     ) -> tuple[dict[tuple[str, str], tuple[str, ...]], list[str]]:
    """Nested k-subsets for the cardinality sweep.

    Each speaker's real utterances get one seeded order. A test item's
    references are the first ``size`` ids of that order with the item itself
    removed, so a real item at ``size == n_real`` sees the other n_real - 1.
    Speakers with fewer than ``size`` real utterances (or fewer than 2) are
    skipped; the warnings say which.
    """
    reals = reals_by_speaker(manifest)
    orders = {spk: speaker_order(ids, seed, spk, "sweep") for spk, ids in reals.items()}
    out, warnings, skipped = {}, [], set()
    for e in manifest:
        order = orders.get(e.speaker_id, [])
        if size > len(order) or len(order) < 2:
            skipped.add(e.speaker_id)
            continue
        out[(e.speaker_id, e.utterance_id)] = tuple(u for u in order if u != e.utterance_id)[:size]
    for spk in sorted(skipped):
        msg = f"size {size}: speaker {spk} has {len(orders.get(spk, []))} real utterances, skipped"
        log.warning(msg)
        warnings.append(msg)
    return out, warnings


def refset_size_sweep(manifest: Sequence[ManifestEntry], sizes: Sequence[int], source=None,
                      metric: Metric | str = Metric.COSINE,
                      strategies: Sequence[Strategy | str] = (Strategy.CB, Strategy.MS),
                      seed: int = 0, normalize=None, workers: int = 1,
                      embeddings: Mapping[str, Embedding] | None = None,
                      config: dict | None = None) -> ExperimentReport:
    """AUC per strategy as a function of the reference-set cardinality."""
    metric = Metric.parse(metric)
    strategies = Strategy.parse_many(strategies)
    report = ExperimentReport(config=dict(config or {}), curves={s.value: [] for s in strategies})
    if not sizes:
        return report
    if embeddings is None:
        embeddings = embed_manifest(manifest, source, workers, resolve_normalize(normalize, metric))
    for k in sizes:
        ref_ids, warnings = sweep_references(manifest, int(k), seed)
        report.warnings.extend(warnings)
        if not ref_ids:
            continue
        refsets = {key: ReferenceSet(key[0], tuple(embeddings[i] for i in ids), ids)
                   for key, ids in ref_ids.items()}
        records = score_tests(manifest, refsets, embeddings, metric, strategies)
        for s in strategies:
            try:
                report.curves[s.value].append((int(k), auc(labeled(records, s))))
            except ProtocolError as exc:
                report.warnings.append(f"size {k}: {exc}")
    return report


def robustness_sweep(manifest: Sequence[ManifestEntry], snr_points: Sequence[float],
                     noise: NoiseMixSpec, source, policy: ReferencePolicy = ReferencePolicy(),
                     metric: Metric | str = Metric.COSINE,
                     strategies: Sequence[Strategy | str] = (Strategy.CB, Strategy.MS),
                     costs: TdcfCosts = TdcfCosts(), normalize=None, workers: int = 1,
                     config: dict | None = None) -> ExperimentReport:
    """AUC per strategy as a function of the SNR of the test audio.

    Only test items are re-mixed; reference embeddings come from clean audio
    and are computed once. Each utterance gets the same noise excerpt at
    every SNR point, only its gain changes.
    """
    metric = Metric.parse(metric)
    strategies = Strategy.parse_many(strategies)
    do_norm = resolve_normalize(normalize, metric)
    ref_ids = reference_ids(manifest, policy)
    needed = sorted({u for ids in ref_ids.values() for u in ids})
    by_id = {e.utterance_id: e for e in manifest}
    clean = embed_manifest([by_id[u] for u in needed], source, workers, do_norm)
    refsets = build_reference_sets(manifest, policy, clean)
    tests = [by_id[uid] for _, uid in sorted(ref_ids, key=lambda k: k[1])]

    report = ExperimentReport(config=dict(config or {}), curves={s.value: [] for s in strategies})
    for snr in snr_points:
        noisy = embed_manifest(tests, source, workers, do_norm,
                               transform=lambda e, w, snr=snr: noise.apply(e.utterance_id, w, snr).mixed)
        records = score_tests(tests, refsets, noisy, metric, strategies)
        for s in strategies:
            ls = labeled(records, s)
            report.curves[s.value].append((float(snr), auc(ls)))
            report.metrics[f"{s.value}@{snr:g}dB"] = evaluate(ls, costs)
    report.metrics = dict(sorted(report.metrics.items()))
    return report


def write_curves_csv(path, curves: Mapping[str, Sequence[tuple[float, float]]], x_name: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", x_name, "auc"])
        for strategy in sorted(curves):
            for x, y in curves[strategy]:
                w.writerow([strategy, repr(x), repr(float(y))])
