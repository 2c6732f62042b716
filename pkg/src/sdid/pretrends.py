"""Pre-treatment diagnostics for subgroup parallel trends.

With several pre-treatment periods the SDiD contrast can be computed on
pairs of periods where nobody is treated yet.  Those placebo contrasts have
expectation zero if the compared levels trend in parallel before treatment.
That is evidence about, never proof of, parallel trends in the treated
period: passing the test says nothing about the post-treatment interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from sdid.core import MultiPeriodPanel, SubgroupContrast
from sdid.distributions import chi2_sf
from sdid.errors import ConfigError, DataError, NumericalError
from sdid.estimators import sdid_categorical
from sdid.inference import with_analytic_inference

CAUTION = (
    "A non-rejected pre-trends test does not establish subgroup parallel trends in the "
    "treatment period; the assumption remains untestable there."
)


class IntervalContrast(NamedTuple):
    start: int
    end: int
    estimate: float
    se: float

    @property
    def z(self) -> float:
        return self.estimate / self.se if self.se > 0 else math.nan


class EventStudyPoint(NamedTuple):
    period: int
    estimate: float
    se: float
    pre_treatment: bool


def _contrast(mpanel: MultiPeriodPanel, t0: int, t1: int, contrast: SubgroupContrast) -> tuple[float, float]:
    panel = mpanel.two_period(t0, t1)
    est = with_analytic_inference(sdid_categorical(panel, contrast), panel)
    return est.point, est.se


def interval_trend_contrasts(mpanel: MultiPeriodPanel, contrast: SubgroupContrast) -> list[IntervalContrast]:
    """SDiD contrast over each adjacent pair of pre-treatment periods."""
    pre = mpanel.pre_times
    if len(pre) < 2:
        raise DataError("pre-trends untestable with a single pre-period")
    out = []
    for t0, t1 in zip(pre, pre[1:]):
        est, se = _contrast(mpanel, t0, t1, contrast)
        out.append(IntervalContrast(t0, t1, est, se))
    return out


def pretrends_joint_test(contrasts: list[IntervalContrast] | list[tuple[float, float]]) -> tuple[float, int, float]:
    """Sum of squared interval z-scores against chi-squared(df = #intervals).

    Adjacent intervals share a period, so their contrasts are correlated;
    the test treats them as independent and is therefore approximate.
    """
    pairs = [(c.estimate, c.se) if isinstance(c, IntervalContrast) else (float(c[0]), float(c[1])) for c in contrasts]
    if not pairs:
        raise ConfigError("joint test needs at least one interval contrast")
    stat = 0.0
    for est, se in pairs:
        if not (se > 0 and math.isfinite(se)):
            raise NumericalError("joint pre-trends test needs finite positive standard errors")
        stat += (est / se) ** 2
    df = len(pairs)
    return stat, df, chi2_sf(stat, df)


def event_study_contrasts(
    mpanel: MultiPeriodPanel,
    contrast: SubgroupContrast,
    base_period: int | None = None,
    include_base: bool = False,
) -> list[EventStudyPoint]:
    """SDiD contrast of every period against ``base_period`` (default: last pre-period).

    Pre-treatment entries are placebos; post-treatment entries estimate
    effect modification at each horizon.
    """
    if base_period is None:
        base_period = mpanel.pre_times[-1]
    if base_period not in mpanel.pre_times:
        raise DataError(f"base period {base_period} is not a pre-treatment period {list(mpanel.pre_times)}")
    out = []
    for t in mpanel.times:
        if t == base_period:
            if include_base:
                out.append(EventStudyPoint(t, 0.0, 0.0, True))
            continue
        est, se = _contrast(mpanel, base_period, t, contrast)
        out.append(EventStudyPoint(t, est, se, t < mpanel.treatment_time))
    return out


@dataclass(frozen=True)
class PretrendsReport:
    contrast: SubgroupContrast
    per_interval: tuple[IntervalContrast, ...]
    joint_stat: float
    joint_df: int
    joint_p: float
    alpha: float
    decision_note: str
    event_study: tuple[EventStudyPoint, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return self.joint_p >= self.alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "contrast": [self.contrast.level_a, self.contrast.level_b],
            "per_interval": [
                {"start": c.start, "end": c.end, "estimate": c.estimate, "se": c.se, "z": c.z}
                for c in self.per_interval
            ],
            "joint_stat": self.joint_stat,
            "joint_df": self.joint_df,
            "joint_p": self.joint_p,
            "alpha": self.alpha,
            "passed": self.passed,
            "decision_note": self.decision_note,
            "event_study": [
                {"period": e.period, "estimate": e.estimate, "se": e.se, "pre_treatment": e.pre_treatment}
                for e in self.event_study
            ],
        }


def pretrends_report(
    mpanel: MultiPeriodPanel,
    contrast: SubgroupContrast,
    alpha: float = 0.05,
    base_period: int | None = None,
) -> PretrendsReport:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    intervals = interval_trend_contrasts(mpanel, contrast)
    stat, df, p = pretrends_joint_test(intervals)
    if p >= alpha:
        verdict = f"No evidence against parallel pre-trends at alpha={alpha} (p={p:.4g})."
    else:
        verdict = f"Pre-trends differ across levels at alpha={alpha} (p={p:.4g}); SDiD estimates are suspect."
    es = event_study_contrasts(mpanel, contrast, base_period)
    return PretrendsReport(contrast, tuple(intervals), stat, df, p, alpha, f"{verdict} {CAUTION}", tuple(es))
