import numpy as np
import pytest

from sdid.core import MultiPeriodPanel, SubgroupContrast
from sdid.errors import DataError, NumericalError
from sdid.estimators import sdid_categorical
from sdid.pretrends import (
    IntervalContrast,
    event_study_contrasts,
    interval_trend_contrasts,
    pretrends_joint_test,
    pretrends_report,
)

AB = SubgroupContrast("A", "B")


def panel_from_means(means_a, means_b, treatment_time, noise=None):
    """Two units per level; the pair's outcomes straddle the level mean by +-1."""
    means_a, means_b = np.asarray(means_a, float), np.asarray(means_b, float)
    T = len(means_a)
    wiggle = np.zeros(T) if noise is None else np.asarray(noise, float)
    rows = [means_a + 1 + wiggle, means_a - 1 - wiggle, means_b + 1, means_b - 1]
    return MultiPeriodPanel(("a1", "a2", "b1", "b2"), ["A", "A", "B", "B"], tuple(range(T)), np.array(rows), treatment_time)


def test_identical_level_means_give_zero():
    mp = panel_from_means([0, 2, 3, 9], [0, 2, 3, 4], treatment_time=3, noise=[0, 0.5, -0.25, 0])
    for c in interval_trend_contrasts(mp, AB):
        assert c.estimate == 0.0


def test_equal_slopes_with_offset():
    mp = panel_from_means([0, 1, 2, 10], [5, 6, 7, 8], treatment_time=3)
    got = interval_trend_contrasts(mp, AB)
    assert [(c.start, c.end) for c in got] == [(0, 1), (1, 2)]
    assert [c.estimate for c in got] == [0.0, 0.0]


def test_diverging_pre_slopes():
    mp = panel_from_means([0, 1, 5], [0, 3, 5], treatment_time=2)
    (c,) = interval_trend_contrasts(mp, AB)
    assert c.estimate == -2.0


def test_single_pre_period_untestable():
    mp = panel_from_means([0, 1], [0, 1], treatment_time=1)
    with pytest.raises(DataError, match="single pre-period"):
        interval_trend_contrasts(mp, AB)


def test_joint_test_examples():
    assert pretrends_joint_test([(0.0, 1.0)]) == (0.0, 1, 1.0)
    stat, df, p = pretrends_joint_test([(1.959964, 1.0)])
    assert stat == pytest.approx(3.8415, abs=1e-4) and df == 1 and p == pytest.approx(0.05, abs=1e-5)
    assert pretrends_joint_test([IntervalContrast(0, 1, 0.0, 1.0), IntervalContrast(1, 2, 0.0, 2.0)])[1:] == (2, 1.0)
    with pytest.raises(NumericalError):
        pretrends_joint_test([(1.0, 0.0)])


def test_event_study_pre_entries_zero_under_parallel_pretrends():
    mp = panel_from_means([0, 1, 2, 10, 12], [5, 6, 7, 8, 9], treatment_time=3, noise=[0, 0.3, 0.1, 0.2, 0])
    es = event_study_contrasts(mp, AB, base_period=2)
    assert [e.period for e in es] == [0, 1, 3, 4]
    pre = [e for e in es if e.pre_treatment]
    # noise in level A only: placebo differences equal the wiggle differences on each unit pair, which cancel
    assert all(e.estimate == pytest.approx(0.0, abs=1e-12) for e in pre)
    post = {e.period: e.estimate for e in es if not e.pre_treatment}
    assert post[3] == pytest.approx(7.0) and post[4] == pytest.approx(8.0)


def test_event_study_include_base_and_bad_base():
    mp = panel_from_means([0, 1, 2, 10], [5, 6, 7, 8], treatment_time=3)
    es = event_study_contrasts(mp, AB, base_period=1, include_base=True)
    assert es[1].period == 1 and es[1].estimate == 0.0
    with pytest.raises(DataError, match="not a pre-treatment"):
        event_study_contrasts(mp, AB, base_period=3)


def test_two_period_reduction_matches_estimator():
    g = np.random.default_rng(0)
    y = g.normal(size=(20, 2))
    x = ["A"] * 9 + ["B"] * 11
    mp = MultiPeriodPanel(tuple(f"u{i}" for i in range(20)), x, (0, 1), y, 1)
    (e,) = event_study_contrasts(mp, AB)
    assert e.estimate == sdid_categorical(mp.two_period(0, 1), AB).point


def test_offset_invariance():
    g = np.random.default_rng(1)
    y = g.normal(size=(30, 4))
    x = np.array(["A"] * 15 + ["B"] * 15, dtype=object)
    mp = MultiPeriodPanel(tuple(f"u{i}" for i in range(30)), x, (0, 1, 2, 3), y, 3)
    y2 = y + np.where(x == "A", 17.0, 0.0)[:, None]
    mp2 = MultiPeriodPanel(mp.unit_ids, x, mp.times, y2, 3)
    for c1, c2 in zip(interval_trend_contrasts(mp, AB), interval_trend_contrasts(mp2, AB)):
        assert c2.estimate == pytest.approx(c1.estimate, abs=1e-12)
    for e1, e2 in zip(event_study_contrasts(mp, AB), event_study_contrasts(mp2, AB)):
        assert e2.estimate == pytest.approx(e1.estimate, abs=1e-12)


def test_report_fields():
    g = np.random.default_rng(2)
    y = g.normal(size=(40, 5))
    x = ["A"] * 20 + ["B"] * 20
    mp = MultiPeriodPanel(tuple(f"u{i}" for i in range(40)), x, tuple(range(5)), y, 3)
    rep = pretrends_report(mp, AB, alpha=0.05)
    assert rep.joint_df == len(rep.per_interval) == 2
    assert all(c.end < mp.treatment_time for c in rep.per_interval)
    assert "does not establish" in rep.decision_note
    d = rep.to_dict()
    assert len(d["per_interval"]) == 2 and d["passed"] == (rep.joint_p >= 0.05)
