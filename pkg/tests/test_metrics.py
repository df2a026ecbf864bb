import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from poiaudio.metrics import (LabeledScores, TdcfCosts, auc, eer, error_rates, evaluate, min_norm_tdcf,
                              rates_at, roc_curve, write_report_json, write_roc_csv)

REAL = [0.9, 0.6, 0.4]
FAKE = [0.8, 0.5, 0.3]

score_lists = st.lists(st.integers(-20, 20).map(lambda v: v / 4), min_size=1, max_size=40)


def test_roc_points():
    ls = LabeledScores([1.0], [0.0])
    assert rates_at(ls, 0.5) == (0.0, 0.0)
    curve = {t: (pm, pf) for t, pm, pf in roc_curve(ls)}
    assert curve[-math.inf] == (0.0, 1.0)
    assert curve[math.inf] == (1.0, 0.0)


def test_roc_fixture_at_055():
    ls = LabeledScores(REAL, FAKE)
    assert oracles.rates_at(REAL, FAKE, 0.55) == (1 / 3, 1 / 3)
    assert rates_at(ls, 0.55) == (1 / 3, 1 / 3)
    # 0.6 is the next grid threshold above 0.55 and counts the same errors
    curve = {t: (pm, pf) for t, pm, pf in roc_curve(ls)}
    assert curve[0.6] == (1 / 3, 1 / 3)


def test_roc_monotone():
    t, pm, pf = error_rates(LabeledScores(REAL, FAKE))
    assert np.all(np.diff(t) > 0)
    assert np.all(np.diff(pm) >= 0) and np.all(np.diff(pf) <= 0)


@pytest.mark.parametrize("real, fake, expected", [
    ([0.9, 0.8], [0.1, 0.2], 1.0),
    ([0.5], [0.5], 0.5),
    (REAL, FAKE, 6 / 9),
])
def test_auc_examples(real, fake, expected):
    assert auc(LabeledScores(real, fake)) == pytest.approx(expected, abs=1e-12)
    assert oracles.auc_pairs(real, fake) == pytest.approx(expected, abs=1e-12)


def test_eer_examples():
    assert eer(LabeledScores([0.9, 0.8, 0.7], [0.6, 0.5, 0.4]))[0] == 0.0
    value, thr = eer(LabeledScores(REAL, FAKE))
    assert value == pytest.approx(1 / 3)
    assert 0.5 < thr <= 0.6
    assert eer(LabeledScores([0.6, 0.5, 0.4], [0.9, 0.8, 0.7]))[0] == 1.0


def test_tdcf_examples():
    assert min_norm_tdcf(LabeledScores([0.9, 0.8], [0.1, 0.2]), TdcfCosts(1, 10)) == 0.0
    assert min_norm_tdcf(LabeledScores(REAL, FAKE)) == pytest.approx(2 / 3)


def test_tdcf_large_false_alarm_cost():
    ls = LabeledScores(REAL, FAKE)
    costs = TdcfCosts(1.0, 1e6)
    got = min_norm_tdcf(ls, costs)
    assert got == oracles.tdcf_sweep(REAL, FAKE, 1.0, 1e6)
    # smallest threshold with p_fa == 0 is 0.9, where one of three reals is above -> p_miss 2/3
    assert got == pytest.approx(2 / 3)


@pytest.mark.parametrize("bad", [([], [1.0]), ([1.0], []), ([float("nan")], [0.0])])
def test_rejects_bad_score_lists(bad):
    with pytest.raises(ValueError):
        LabeledScores(*bad)


@pytest.mark.parametrize("c_miss, c_fa", [(0, 1), (1, -1)])
def test_rejects_nonpositive_costs(c_miss, c_fa):
    with pytest.raises(ValueError):
        TdcfCosts(c_miss, c_fa)


@given(score_lists, score_lists)
def test_auc_matches_trapezoid(real, fake):
    """Area under (p_fa, 1 - p_miss), integrated with trapezoids."""
    t, pm, pf = error_rates(LabeledScores(real, fake))
    x, y = pf[::-1], (1 - pm)[::-1]
    area = float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))
    assert auc(LabeledScores(real, fake)) == pytest.approx(area, abs=1e-9)


@given(score_lists, score_lists)
def test_rank_invariance(real, fake):
    ls = LabeledScores(real, fake)
    warp = LabeledScores(np.exp(np.asarray(real)) * 3 - 1, np.exp(np.asarray(fake)) * 3 - 1)
    a, b = evaluate(ls), evaluate(warp)
    assert (a.eer, a.auc, a.min_tdcf) == pytest.approx((b.eer, b.auc, b.min_tdcf), abs=1e-12)


@given(score_lists, score_lists)
def test_duplication_invariance(real, fake):
    a = evaluate(LabeledScores(real, fake))
    b = evaluate(LabeledScores(real * 2, fake * 2))
    assert (a.eer, a.auc, a.min_tdcf, a.eer_threshold) == (b.eer, b.auc, b.min_tdcf, b.eer_threshold)


@given(score_lists, score_lists)
def test_tdcf_bounds(real, fake):
    ls = LabeledScores(real, fake)
    d = min_norm_tdcf(ls)
    assert 0.0 <= d <= 1.0
    assert d <= 2 * eer(ls)[0] + 1.0 / min(len(real), len(fake)) + 1e-12


@given(score_lists, score_lists, st.floats(0.01, 100), st.floats(0.01, 100))
@settings(max_examples=40)
def test_tdcf_bounded_any_costs(real, fake, c_miss, c_fa):
    assert 0.0 <= min_norm_tdcf(LabeledScores(real, fake), TdcfCosts(c_miss, c_fa)) <= 1.0 + 1e-12


def test_report_files(tmp_path):
    ls = LabeledScores(REAL, FAKE)
    write_report_json(tmp_path / "r.json", evaluate(ls))
    write_roc_csv(tmp_path / "roc.csv", roc_curve(ls))
    d = json.loads((tmp_path / "r.json").read_text())
    assert set(d) == {"eer", "auc", "min_tdcf", "eer_threshold", "n_real", "n_fake"}
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "threshold,p_miss,p_fa" and lines[1].startswith("-inf")
