"""poiaudio command line.

Subcommands: synth, features, embed, evaluate, sweep-ref, robustness.
Every run validates the whole configuration before reading any data.

Exit codes: 0 success, 2 config error, 3 data error, 4 partial failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .audio_io import AudioError, load_segment
from .augmentation import NoiseMixSpec
from .config import CONFIG_ENV, ConfigError, RunConfig, load_config
from .embeddings import (BaselineSource, EmbeddingError, ExternalExtractor, ExternalSource, StoreSource,
                         load_embedding_store, write_embedding_store)
from .frontend import compute_features, write_features
from .metrics import roc_curve, write_roc_csv
from .protocol import (ManifestEntry, ProtocolError, labeled, read_manifest, refset_size_sweep,
                       robustness_sweep, run_evaluation, write_curves_csv)
from .synthetic import generate_synthetic_corpus
from .verification import write_scores

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("poiaudio")


def _csv_floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _csv_ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON run config (default: ${CONFIG_ENV})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--strategy", choices=["cb", "ms", "both"])
    common.add_argument("--metric", choices=["cosine", "neg-sq-euclid"])
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="poiaudio", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate the synthetic-speaker corpus")
    f = sub.add_parser("features", parents=[common], help="dump front-end features per utterance")
    f.add_argument("input", help="directory of .wav files or a manifest CSV")
    e = sub.add_parser("embed", parents=[common], help="write an embedding exchange file")
    e.add_argument("manifest", nargs="?")
    ev = sub.add_parser("evaluate", parents=[common], help="score a manifest with CB/MS and report metrics")
    ev.add_argument("manifest", nargs="?")
    sw = sub.add_parser("sweep-ref", parents=[common], help="AUC vs reference-set size")
    sw.add_argument("manifest", nargs="?")
    sw.add_argument("--sizes", type=_csv_ints, help="comma-separated sizes, e.g. 1,2,5,10,20")
    rb = sub.add_parser("robustness", parents=[common], help="AUC vs SNR of added noise")
    rb.add_argument("manifest", nargs="?")
    rb.add_argument("--snr-list", type=_csv_floats, help="comma-separated SNRs in dB")
    rb.add_argument("--noise", help="white, pink, or a WAV file/directory")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    strategies = {"cb": ["CB"], "ms": ["MS"], "both": ["CB", "MS"]}.get(args.strategy or "")
    cfg = cfg.with_overrides(out_dir=args.out, seed=args.seed, workers=args.workers,
                             metric=args.metric, strategies=strategies,
                             manifest=getattr(args, "manifest", None), sizes=getattr(args, "sizes", None))
    if getattr(args, "snr_list", None) is not None:
        cfg.noise.snr_list = args.snr_list
    if getattr(args, "noise", None) is not None:
        cfg.noise.source = args.noise
    cfg.validate()
    if args.command in ("embed", "evaluate", "sweep-ref", "robustness") and not cfg.manifest:
        raise ConfigError("a manifest is required (positional argument or 'manifest' in the config)")
    if args.command == "robustness" and cfg.embedding.source == "store":
        raise ConfigError("robustness needs audio; embedding.source 'store' cannot re-embed noisy audio")
    if args.command == "robustness":
        try:
            NoiseMixSpec(cfg.noise.source, cfg.seed)
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def make_source(cfg: RunConfig):
    e = cfg.embedding
    if e.source == "baseline":
        return BaselineSource(cfg.frontend, cfg.sample_rate_hz, cfg.segment_s, cfg.tile_short)
    if e.source == "store":
        return StoreSource(load_embedding_store(e.store_path))
    extractor = ExternalExtractor(e.command, e.exchange_dir, e.dim, e.timeout_s)
    return ExternalSource(extractor, cfg.sample_rate_hz, cfg.segment_s, cfg.tile_short)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- subcommands

def cmd_synth(cfg: RunConfig, out: Path) -> int:
    s = cfg.synth
    entries = generate_synthetic_corpus(out, s.n_speakers, s.utts_per_speaker, s.fakes_per_speaker,
                                        cfg.seed, cfg.sample_rate_hz, s.mimicry)
    print(f"wrote {len(entries)} utterances to {out / 'manifest.csv'}")
    return EXIT_OK


def _feature_inputs(input_path: Path) -> list[tuple[str, str]]:
    if input_path.is_dir():
        return [(p.stem, str(p)) for p in sorted(input_path.glob("*.wav"))]
    return [(e.utterance_id, e.path) for e in read_manifest(input_path) if e.path]


def cmd_features(cfg: RunConfig, out: Path, input_path: Path) -> int:
    items = _feature_inputs(input_path)
    out.mkdir(parents=True, exist_ok=True)
    ok, failed = [], []
    for uid, path in items:
        try:
            w = load_segment(path, cfg.sample_rate_hz, cfg.segment_s, cfg.tile_short)
            fm = compute_features(w, cfg.frontend)
            write_features(out / f"{uid}.feat", fm)
            ok.append(uid)
        except (AudioError, OSError, ValueError) as exc:
            log.error("%s: %s", path, exc)
            failed.append({"utterance_id": uid, "path": path, "error": str(exc)})
    _write_json(out / "features_summary.json", {"n_ok": len(ok), "n_failed": len(failed), "failed": failed})
    print(f"features: {len(ok)} written, {len(failed)} failed")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_embed(cfg: RunConfig, out: Path, manifest: list[ManifestEntry]) -> int:
    source = make_source(cfg)
    out.mkdir(parents=True, exist_ok=True)
    store, failed = {}, []
    if isinstance(source, ExternalSource):
        try:
            store = source.embed_many([(e.utterance_id, e.path) for e in manifest])
        except EmbeddingError as exc:
            log.error("%s", exc)
            failed = [e.utterance_id for e in manifest]
    else:
        for e in manifest:
            try:
                store[e.utterance_id] = source.embed(e.utterance_id, e.path)
            except (EmbeddingError, AudioError, OSError, ValueError) as exc:
                log.error("%s: %s", e.utterance_id, exc)
                failed.append(e.utterance_id)
    write_embedding_store(out / "embeddings.txt", sorted(store.items()))
    dims = sorted({v.dim for v in store.values()})
    _write_json(out / "embed_summary.json", {"n_ok": len(store), "n_failed": len(failed), "failed": failed,
                                             "dim": dims[0] if len(dims) == 1 else dims, "source": source.name})
    print(f"embed: {len(store)} embeddings (dim {dims}), {len(failed)} failed")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_evaluate(cfg: RunConfig, out: Path, manifest: list[ManifestEntry]) -> int:
    report = run_evaluation(manifest, cfg.policy, make_source(cfg), cfg.metric_enum, cfg.strategy_enums,
                            cfg.tdcf, cfg.embedding.normalize, cfg.workers, config=cfg.fingerprint_dict())
    out.mkdir(parents=True, exist_ok=True)
    write_scores(out / "scores.csv", report.records)
    for s in cfg.strategy_enums:
        write_roc_csv(out / f"roc_{s.value}.csv", roc_curve(labeled(report.records, s)))
    _write_json(out / "report.json", report.to_dict(_timestamp()))
    for name, m in report.metrics.items():
        print(f"{name}: EER={m.eer:.4f} AUC={m.auc:.4f} min-tDCF={m.min_tdcf:.4f}")
    return EXIT_OK


def cmd_sweep_ref(cfg: RunConfig, out: Path, manifest: list[ManifestEntry]) -> int:
    report = refset_size_sweep(manifest, cfg.sizes, make_source(cfg), cfg.metric_enum, cfg.strategy_enums,
                               cfg.seed, cfg.embedding.normalize, cfg.workers, config=cfg.fingerprint_dict())
    out.mkdir(parents=True, exist_ok=True)
    write_curves_csv(out / "refset_curve.csv", report.curves, "size")
    _write_json(out / "report.json", report.to_dict(_timestamp()))
    for name, curve in report.curves.items():
        print(name, " ".join(f"{k}:{a:.4f}" for k, a in curve))
    return EXIT_OK


def cmd_robustness(cfg: RunConfig, out: Path, manifest: list[ManifestEntry]) -> int:
    noise = NoiseMixSpec(cfg.noise.source, cfg.seed)
    report = robustness_sweep(manifest, cfg.noise.snr_list, noise, make_source(cfg), cfg.policy,
                              cfg.metric_enum, cfg.strategy_enums, cfg.tdcf, cfg.embedding.normalize,
                              cfg.workers, config=cfg.fingerprint_dict())
    out.mkdir(parents=True, exist_ok=True)
    write_curves_csv(out / "snr_curve.csv", report.curves, "snr_db")
    _write_json(out / "report.json", report.to_dict(_timestamp()))
    for name, curve in report.curves.items():
        print(name, " ".join(f"{x:g}dB:{a:.4f}" for x, a in curve))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out_dir)
    try:
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "features":
            return cmd_features(cfg, out, Path(args.input))
        manifest = read_manifest(cfg.manifest)
        handler = {"embed": cmd_embed, "evaluate": cmd_evaluate, "sweep-ref": cmd_sweep_ref,
                   "robustness": cmd_robustness}[args.command]
        return handler(cfg, out, manifest)
    except (ProtocolError, EmbeddingError, AudioError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
