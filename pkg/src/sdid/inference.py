"""Standard errors, confidence intervals and tests for SDiD estimates.

Two routes are available.  The analytic route treats the two subgroup means
of ``d`` as independent and uses the unpooled (Welch) variance.  The
bootstrap route resamples whole units with replacement and recomputes the
estimator; replicate ``r`` draws from its own counter-based stream so the
result does not depend on the number of workers.

Normal-theory intervals can be poor when a subgroup is small; the percentile
bootstrap is the safer default in that regime.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from sdid import rng as rngmod
from sdid.core import CovariateKind, PanelDataset, level_stats
from sdid.distributions import norm_ppf, norm_sf
from sdid.errors import ConfigError, DataError, NumericalError
from sdid.estimators import (
    EffectModEstimate,
    EstimatorSpec,
    Extrapolation,
    LinearSpline,
    estimate,
    fit_arrays,
    sdid_continuous,
)


class _Moments(Protocol):
    n: int
    var: float


def analytic_se(stats_a: _Moments, stats_b: _Moments) -> float:
    """Welch standard error of a difference of two independent means."""
    if stats_a.n < 2 or stats_b.n < 2:
        raise NumericalError(f"analytic SE needs at least 2 units per level (got n_a={stats_a.n}, n_b={stats_b.n})")
    return math.sqrt(stats_a.var / stats_a.n + stats_b.var / stats_b.n)


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie strictly between 0 and 1, got {level}")


def confidence_interval(point: float, se: float, level: float = 0.95) -> tuple[float, float]:
    _check_level(level)
    if not se >= 0:
        raise ConfigError(f"standard error must be >= 0, got {se}")
    if se == 0:
        return point, point
    half = norm_ppf(0.5 + level / 2.0) * se
    return point - half, point + half


def wald_test(point: float, se: float) -> tuple[float, float]:
    """z statistic and two-sided p-value for H0: no effect modification."""
    if not se > 0:
        raise NumericalError("Wald test is undefined with a zero standard error")
    z = point / se
    return z, min(1.0, 2.0 * norm_sf(abs(z)))


def with_analytic_inference(est: EffectModEstimate, panel: PanelDataset, level: float = 0.95) -> EffectModEstimate:
    """Attach Welch SE, normal CI and Wald test to a subgroup-means estimate."""
    if panel.covariate_kind is not CovariateKind.CATEGORICAL:
        raise ConfigError("analytic inference is only available for categorical contrasts; use the bootstrap")
    c = est.contrast
    a = level_stats(panel, c.level_a)
    b = level_stats(panel, c.level_b)
    if c.is_trivial:
        se = 0.0
    else:
        se = analytic_se(a, b)
    lo, hi = confidence_interval(est.point, se, level)
    z = p = None
    if se > 0:
        z, p = wald_test(est.point, se)
    return replace(est, se=se, ci=(lo, hi, level), z=z, p_value=p)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    replicates: np.ndarray
    ci_percentile: tuple[float, float, float]
    se_boot: float
    seed: int
    B: int
    n_failed: int = 0
    stratified: bool = False

    @property
    def failure_rate(self) -> float:
        return self.n_failed / self.B


def percentile_interval(replicates: np.ndarray, level: float) -> tuple[float, float]:
    """Order-statistic interval: the ceil(m*q)-th smallest replicate at q = (1 -+ level)/2."""
    _check_level(level)
    s = np.sort(replicates)
    m = len(s)
    tail = (1.0 - level) / 2.0
    lo = min(max(math.ceil(m * tail) - 1, 0), m - 1)
    hi = min(max(math.ceil(m * (1.0 - tail)) - 1, 0), m - 1)
    return float(s[lo]), float(s[hi])


def _bootstrap_se(replicates: np.ndarray) -> float:
    if len(replicates) < 2 or np.ptp(replicates) == 0:
        return 0.0
    return float(np.std(replicates, ddof=1))


class _Replicator:
    """Recomputes the estimator on replicate ``r``; returns nan when the replicate fails."""

    def __init__(self, panel: PanelDataset, spec: EstimatorSpec, seed: int, stratified: bool):
        self.spec = spec
        self.seed = seed
        self.stratified = stratified
        self.n = len(panel)
        self.d = np.asarray(panel.deltas)
        self.x = panel.x
        self.kind = panel.covariate_kind
        if spec.basis is None or stratified:
            if self.kind is not CovariateKind.CATEGORICAL:
                raise ConfigError("subgroup-means and stratified bootstraps need a categorical covariate")
            self.codes = np.asarray(panel.level_codes)
            self.k = len(panel.levels)
            self.strata = [np.flatnonzero(self.codes == i) for i in range(self.k)]
        if spec.basis is None:
            levels = panel.levels
            self.ia = levels.index(spec.contrast.level_a)
            self.ib = levels.index(spec.contrast.level_b)
        else:
            basis = spec.basis
            if isinstance(basis, LinearSpline):
                # pin knots to the full-sample choice so every replicate fits the same basis
                basis = fit_arrays(panel.x, self.d, basis, self.kind).basis
            self.basis = basis

    def indices(self, r: int) -> np.ndarray:
        g = rngmod.stream(self.seed, rngmod.BOOTSTRAP, r)
        if not self.stratified:
            return g.integers(0, self.n, size=self.n)
        return np.concatenate([s[g.integers(0, len(s), size=len(s))] for s in self.strata])

    def __call__(self, r: int) -> float:
        idx = self.indices(r)
        if self.spec.basis is None:
            codes = self.codes[idx]
            counts = np.bincount(codes, minlength=self.k)
            if counts[self.ia] == 0 or counts[self.ib] == 0:
                return math.nan
            sums = np.bincount(codes, weights=self.d[idx], minlength=self.k)
            return float(sums[self.ia] / counts[self.ia] - sums[self.ib] / counts[self.ib])
        try:
            model = fit_arrays(self.x[idx], self.d[idx], self.basis, self.kind)
            return sdid_continuous(model, self.spec.contrast, Extrapolation.WARN).point
        except (DataError, NumericalError):
            return math.nan


def bootstrap_sdid(
    panel: PanelDataset,
    spec: EstimatorSpec,
    B: int = 1000,
    seed: int = 0,
    level: float = 0.95,
    stratified: bool = False,
    workers: int | None = None,
    max_failure_rate: float = 0.10,
) -> BootstrapResult:
    """Nonparametric unit bootstrap of an SDiD estimate.

    A replicate fails when a contrast level is absent from the resample (or
    the regression cannot be fitted).  Failures are counted and excluded from
    ``replicates``; if more than ``max_failure_rate`` of the ``B`` replicates
    fail the whole call raises, suggesting ``stratified=True``.
    """
    if B < 1:
        raise ConfigError(f"number of bootstrap replicates must be >= 1, got {B}")
    _check_level(level)
    estimate(panel, spec)  # surface unknown levels / bad bases before resampling
    rep = _Replicator(panel, spec, seed, stratified)
    n_workers = min(rngmod.resolve_workers(workers), B)
    if n_workers == 1:
        values = np.fromiter((rep(r) for r in range(B)), dtype=float, count=B)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            values = np.fromiter(pool.map(rep, range(B)), dtype=float, count=B)
    ok = np.isfinite(values)
    n_failed = int(B - ok.sum())
    if n_failed > max_failure_rate * B or n_failed == B:
        raise NumericalError(
            f"{n_failed} of {B} bootstrap replicates failed (a contrast level was missing from the resample "
            "or the fit was singular); rerun with the stratified bootstrap"
        )
    reps = values[ok]
    lo, hi = percentile_interval(reps, level)
    return BootstrapResult(reps, (lo, hi, level), _bootstrap_se(reps), seed, B, n_failed, stratified)


def with_bootstrap_inference(est: EffectModEstimate, boot: BootstrapResult) -> EffectModEstimate:
    """Use the bootstrap SE and percentile CI as the estimate's inference."""
    z = p = None
    if boot.se_boot > 0:
        z, p = wald_test(est.point, boot.se_boot)
    return replace(est, se=boot.se_boot, ci=boot.ci_percentile, z=z, p_value=p)
