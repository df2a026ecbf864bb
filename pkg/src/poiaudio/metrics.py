"""Threshold-free detection metrics for bona fide (real) vs spoof (fake) scores.

Convention: higher score = more likely real. At threshold t an utterance is
rejected when its score is < t, so

    p_miss(t) = #{real < t} / n_real,     p_fa(t) = #{fake >= t} / n_fake.

The threshold grid is every distinct observed score plus -inf and +inf, which
makes all minimisations exact on finite data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True, eq=False)
class LabeledScores:
    real: np.ndarray
    fake: np.ndarray

    def __init__(self, real, fake):
        real = np.asarray(real, dtype=np.float64).ravel()
        fake = np.asarray(fake, dtype=np.float64).ravel()
        if real.size == 0 or fake.size == 0:
            raise ValueError("metrics need at least one real and one fake score")
        if not (np.isfinite(real).all() and np.isfinite(fake).all()):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "fake", fake)


@dataclass(frozen=True)
class TdcfCosts:
    c_miss: float = 1.0
    c_fa: float = 1.0

    def __post_init__(self):
        if not (self.c_miss > 0 and self.c_fa > 0):
            raise ValueError("t-DCF costs must be positive")


@dataclass(frozen=True)
class MetricsReport:
    eer: float
    auc: float
    min_tdcf: float
    eer_threshold: float
    n_real: int
    n_fake: int

    def to_dict(self) -> dict:
        return asdict(self)


def error_rates(ls: LabeledScores):
    """Thresholds (ascending, with sentinels) and the matching p_miss, p_fa arrays."""
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([ls.real, ls.fake])), [np.inf]])
    real, fake = np.sort(ls.real), np.sort(ls.fake)
    n_miss = np.searchsorted(real, thresholds, side="left")
    n_fa = fake.size - np.searchsorted(fake, thresholds, side="left")
    return thresholds, n_miss / real.size, n_fa / fake.size


def rates_at(ls: LabeledScores, threshold: float) -> tuple[float, float]:
    """(p_miss, p_fa) at an arbitrary threshold."""
    return float(np.mean(ls.real < threshold)), float(np.mean(ls.fake >= threshold))


def roc_curve(ls: LabeledScores) -> list[tuple[float, float, float]]:
    thresholds, p_miss, p_fa = error_rates(ls)
    return list(zip(thresholds.tolist(), p_miss.tolist(), p_fa.tolist()))


def auc(ls: LabeledScores) -> float:
    """Mann-Whitney estimate P(real > fake) + 0.5 P(real == fake), via mid-ranks."""
    n_r, n_f = ls.real.size, ls.fake.size
    ranks = rankdata(np.concatenate([ls.real, ls.fake]))
    u = ranks[:n_r].sum() - n_r * (n_r + 1) / 2.0
    return float(u / (n_r * n_f))


def eer(ls: LabeledScores) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Takes the grid point minimising |p_miss - p_fa| (the first, i.e. smallest
    threshold, on ties) and returns the midpoint (p_miss + p_fa) / 2 there.
    """
    thresholds, p_miss, p_fa = error_rates(ls)
    i = int(np.argmin(np.abs(p_miss - p_fa)))
    return float((p_miss[i] + p_fa[i]) / 2.0), float(thresholds[i])


def min_norm_tdcf(ls: LabeledScores, costs: TdcfCosts = TdcfCosts()) -> float:
    """min over thresholds of (c_miss p_miss + c_fa p_fa) / min(c_miss, c_fa).

    The normaliser is the cost of the better of the two trivial systems
    (accept everything / reject everything), so the result lies in [0, 1].
    """
    _, p_miss, p_fa = error_rates(ls)
    dcf = costs.c_miss * p_miss + costs.c_fa * p_fa
    return float(dcf.min() / min(costs.c_miss, costs.c_fa))


def evaluate(ls: LabeledScores, costs: TdcfCosts = TdcfCosts()) -> MetricsReport:
    e, t = eer(ls)
    return MetricsReport(
        eer=e, auc=auc(ls), min_tdcf=min_norm_tdcf(ls, costs), eer_threshold=t,
        n_real=int(ls.real.size), n_fake=int(ls.fake.size),
    )


def metrics_from_records(records, strategy: str, costs: TdcfCosts = TdcfCosts()) -> MetricsReport:
    real = [r.score for r in records if r.strategy == strategy and r.label == "real"]
    fake = [r.score for r in records if r.strategy == strategy and r.label == "fake"]
    return evaluate(LabeledScores(real, fake), costs)


def _json_float(v: float):
    return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")


def write_report_json(path, report: MetricsReport) -> None:
    d = {k: _json_float(v) if isinstance(v, float) else v for k, v in report.to_dict().items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_roc_csv(path, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "p_miss", "p_fa"])
        for t, pm, pf in curve:
            w.writerow([repr(float(t)), repr(float(pm)), repr(float(pf))])
