"""Run configuration: one JSON file, validated up front, overridable from the CLI.

All randomness flows from the single top-level ``seed``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .frontend import PRESETS, FrontendConfig
from .metrics import TdcfCosts
from .protocol import FIXED_LIST, LEAVE_ONE_OUT, ReferencePolicy
from .verification import Metric, Strategy

CONFIG_ENV = "POIAUDIO_CONFIG"
SOURCES = ("baseline", "store", "external")


class ConfigError(ValueError):
    pass


@dataclass
class EmbeddingConfig:
    source: str = "baseline"
    store_path: str | None = None
    command: str | None = None
    exchange_dir: str | None = None
    dim: int | None = None
    timeout_s: float = 300.0
    normalize: str | bool = "auto"

    def validate(self) -> None:
        if self.source not in SOURCES:
            raise ConfigError(f"embedding.source must be one of {SOURCES}, got {self.source!r}")
        store_keys = self.store_path is not None
        external_keys = self.command is not None or self.exchange_dir is not None
        if self.source == "store" and not store_keys:
            raise ConfigError("embedding.source 'store' needs embedding.store_path")
        if self.source == "external" and not (self.command and self.exchange_dir):
            raise ConfigError("embedding.source 'external' needs embedding.command and embedding.exchange_dir")
        mixed = {
            "baseline": store_keys or external_keys,
            "store": external_keys,
            "external": store_keys,
        }[self.source]
        if mixed:
            raise ConfigError(f"embedding settings mix source types; source is {self.source!r}")
        if self.normalize not in ("auto", True, False):
            raise ConfigError("embedding.normalize must be 'auto', true or false")
        if self.dim is not None and self.dim < 1:
            raise ConfigError("embedding.dim must be >= 1")


@dataclass
class NoiseConfig:
    source: str | list = "white"
    snr_list: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])


@dataclass
class SynthConfig:
    n_speakers: int = 10
    utts_per_speaker: int = 20
    fakes_per_speaker: int = 10
    mimicry: float = 0.5


@dataclass
class RunConfig:
    sample_rate_hz: int = 16000
    segment_s: float = 4.0
    tile_short: bool = True
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    metric: str = "cosine"
    strategies: list = field(default_factory=lambda: ["CB", "MS"])
    reference: dict = field(default_factory=lambda: {"kind": LEAVE_ONE_OUT, "fixed_size": 10, "fixed_ids": None})
    tdcf: TdcfCosts = field(default_factory=TdcfCosts)
    sizes: list = field(default_factory=lambda: [1, 2, 5, 10, 20])
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0
    workers: int = 1
    manifest: str | None = None
    out_dir: str = "out"

    # -- derived objects
    @property
    def metric_enum(self) -> Metric:
        return Metric.parse(self.metric)

    @property
    def strategy_enums(self) -> tuple[Strategy, ...]:
        return Strategy.parse_many(self.strategies)

    @property
    def policy(self) -> ReferencePolicy:
        return ReferencePolicy(
            kind=self.reference.get("kind", LEAVE_ONE_OUT),
            fixed_size=int(self.reference.get("fixed_size", 10)),
            fixed_ids=self.reference.get("fixed_ids"),
            seed=self.seed,
        )

    def validate(self) -> "RunConfig":
        try:
            if self.sample_rate_hz <= 0 or self.segment_s <= 0:
                raise ConfigError("sample_rate_hz and segment_s must be positive")
            self.frontend.validate(self.sample_rate_hz)
            self.embedding.validate()
            self.metric_enum
            if not self.strategy_enums:
                raise ConfigError("at least one strategy is required")
            if self.reference.get("kind", LEAVE_ONE_OUT) not in (LEAVE_ONE_OUT, FIXED_LIST):
                raise ConfigError(f"unknown reference policy {self.reference.get('kind')!r}")
            self.policy
            if any(int(k) < 1 for k in self.sizes):
                raise ConfigError("reference-set sizes must be >= 1")
            [float(s) for s in self.noise.snr_list]
            if self.workers < 1:
                raise ConfigError("workers must be >= 1")
            if self.synth.n_speakers < 2:
                raise ConfigError("synth.n_speakers must be >= 2")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    # -- serialisation
    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint_dict(self) -> dict:
        """What determines results; excludes where outputs go and how many workers ran."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        _reject_unknown(cls, d, "")
        try:
            fe = d.pop("frontend", {}) or {}
            if isinstance(fe, str):
                if fe not in PRESETS:
                    raise ConfigError(f"unknown frontend preset {fe!r}; choose from {sorted(PRESETS)}")
                frontend = FrontendConfig.preset(fe)
            else:
                preset = fe.pop("preset", None) if isinstance(fe, dict) else None
                _reject_unknown(FrontendConfig, fe, "frontend.")
                frontend = FrontendConfig.preset(preset, **fe) if preset else FrontendConfig(**fe)
            emb = d.pop("embedding", {}) or {}
            _reject_unknown(EmbeddingConfig, emb, "embedding.")
            noise = d.pop("noise", {}) or {}
            _reject_unknown(NoiseConfig, noise, "noise.")
            synth = d.pop("synth", {}) or {}
            _reject_unknown(SynthConfig, synth, "synth.")
            tdcf = d.pop("tdcf", {}) or {}
            ref = {"kind": LEAVE_ONE_OUT, "fixed_size": 10, "fixed_ids": None, **(d.pop("reference", {}) or {})}
            unknown = set(ref) - {"kind", "fixed_size", "fixed_ids"}
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted('reference.' + k for k in unknown)}")
            return cls(frontend=frontend, embedding=EmbeddingConfig(**emb), noise=NoiseConfig(**noise),
                       synth=SynthConfig(**synth), tdcf=TdcfCosts(**tdcf), reference=ref, **d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _reject_unknown(cls, d: dict, prefix: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")


def load_config(path=None) -> RunConfig:
    """Read a JSON config (``path``, else $POIAUDIO_CONFIG, else defaults)."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)
