"""Simulation lab: potential-outcome DGPs with closed-form truth.

For a unit in level g,

    Y0    = alpha_g + e0
    Y1(0) = alpha_g + tau + shock + delta_g + e1
    Y1(1) = Y1(0) + beta_g

and the observed post outcome is Y1(1), since everybody is treated.  The
effect modification between levels a and b is beta_a - beta_b.  Subgroup
parallel trends holds exactly when delta_a == delta_b; ``shock`` is a
treated-population-wide change at the treatment date that would break a
comparison against an external control group but cancels between levels.

The untreated potential outcome is kept in a separate ledger for auditing
and never reaches an estimator.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from sdid import rng as rngmod
from sdid.core import CovariateKind, MultiPeriodPanel, PanelDataset, SubgroupContrast
from sdid.errors import ConfigError, DataError, NumericalError, SdidError
from sdid.estimators import EstimatorSpec, estimate
from sdid.inference import bootstrap_sdid, confidence_interval, wald_test, with_analytic_inference
from sdid.pretrends import interval_trend_contrasts, pretrends_joint_test


class NoiseDist(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class NoiseSpec:
    """Independent mean-zero noise with the given standard deviation at each time."""

    dist: NoiseDist = NoiseDist.GAUSSIAN
    sd_pre: float = 1.0
    sd_post: float = 1.0
    df: float | None = None  # Student-t only

    def __post_init__(self) -> None:
        object.__setattr__(self, "dist", NoiseDist(self.dist))
        object.__setattr__(self, "sd_pre", float(self.sd_pre))
        object.__setattr__(self, "sd_post", float(self.sd_post))
        if not (self.sd_pre >= 0 and self.sd_post >= 0):
            raise ConfigError("noise standard deviations must be >= 0")
        if self.dist is NoiseDist.STUDENT_T and not (self.df is not None and self.df > 2):
            raise ConfigError("Student-t noise needs df > 2 for a finite variance")

    def draw(self, g: np.random.Generator, sd: float, size: int) -> np.ndarray:
        if self.dist is NoiseDist.GAUSSIAN:
            z = g.standard_normal(size)
        elif self.dist is NoiseDist.UNIFORM:
            z = g.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        else:
            z = g.standard_t(self.df, size) * math.sqrt((self.df - 2.0) / self.df)
        return z * sd


@dataclass(frozen=True)
class LevelSpec:
    label: str
    prob: float
    alpha: float = 0.0  # baseline mean of Y0
    delta: float = 0.0  # trend deviation into the treated period
    beta: float = 0.0  # treatment effect
    pre_delta: float = 0.0  # per-interval trend deviation between pre-periods (multi-period only)

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", str(self.label))
        for name in ("prob", "alpha", "delta", "beta", "pre_delta"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class DgpSpec:
    levels: tuple[LevelSpec, ...]
    tau: float = 0.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    n: int = 1000
    seed: int = 0
    shock: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "shock", float(self.shock))
        if not self.levels:
            raise ConfigError("DGP needs at least one level")
        labels = [lv.label for lv in self.levels]
        if len(set(labels)) != len(labels):
            raise ConfigError("DGP level labels must be unique")
        probs = np.array([lv.prob for lv in self.levels], dtype=float)
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigError("level sampling probabilities must be positive and sum to 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        values = [self.tau, self.shock] + [v for lv in self.levels for v in (lv.alpha, lv.delta, lv.beta, lv.pre_delta)]
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("DGP parameters must be finite")

    def level(self, label: str) -> LevelSpec:
        for lv in self.levels:
            if lv.label == str(label):
                return lv
        raise DataError(f"unknown level {label!r}; DGP levels: {[lv.label for lv in self.levels]}")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["noise"]["dist"] = self.noise.dist.value
        d["levels"] = list(d["levels"])
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DgpSpec:
        try:
            noise = NoiseSpec(**d.get("noise", {}))
            levels = tuple(LevelSpec(**lv) for lv in d["levels"])
            rest = {k: d[k] for k in ("tau", "n", "seed", "shock") if k in d}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid DGP document: {exc}") from None
        return cls(levels=levels, noise=noise, **rest)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> DgpSpec:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc)


@dataclass(frozen=True, eq=False)
class PotentialOutcomes:
    """Audit ledger of a simulated sample: both potential outcomes at time 1."""

    unit_ids: tuple[str, ...]
    x: np.ndarray
    y_pre: np.ndarray
    y1_untreated: np.ndarray
    y1_treated: np.ndarray

    def rows(self) -> list[dict[str, Any]]:
        return [
            {"unit_id": u, "x": str(x), "y_pre": a, "y1_untreated": b, "y1_treated": c}
            for u, x, a, b, c in zip(self.unit_ids, self.x, self.y_pre, self.y1_untreated, self.y1_treated)
        ]


def _unit_ids(n: int) -> tuple[str, ...]:
    width = len(str(n - 1))
    return tuple(f"u{i:0{width}d}" for i in range(n))


def _draw_levels(dgp: DgpSpec, g: np.random.Generator) -> np.ndarray:
    probs = np.array([lv.prob for lv in dgp.levels])
    return g.choice(len(dgp.levels), size=dgp.n, p=probs / probs.sum())


def generate(dgp: DgpSpec, rng: np.random.Generator | None = None) -> tuple[PanelDataset, PotentialOutcomes]:
    """Draw one sample.  Without ``rng`` the stream is seeded from ``dgp.seed``."""
    g = rng if rng is not None else rngmod.stream(dgp.seed, rngmod.SIMULATION, 0)
    codes = _draw_levels(dgp, g)
    alpha = np.array([lv.alpha for lv in dgp.levels])[codes]
    delta = np.array([lv.delta for lv in dgp.levels])[codes]
    beta = np.array([lv.beta for lv in dgp.levels])[codes]
    e0 = dgp.noise.draw(g, dgp.noise.sd_pre, dgp.n)
    e1 = dgp.noise.draw(g, dgp.noise.sd_post, dgp.n)
    y0 = alpha + e0
    y1_untreated = alpha + dgp.tau + dgp.shock + delta + e1
    y1_treated = y1_untreated + beta
    labels = np.array([lv.label for lv in dgp.levels], dtype=object)[codes]
    ids = _unit_ids(dgp.n)
    # observed post outcome is the treated potential outcome
    panel = PanelDataset(ids, labels, y0, y1_treated, CovariateKind.CATEGORICAL, "simulated")
    return panel, PotentialOutcomes(ids, labels, y0, y1_untreated, y1_treated)


def generate_multiperiod(
    dgp: DgpSpec,
    n_pre: int,
    n_post: int = 1,
    rng: np.random.Generator | None = None,
) -> MultiPeriodPanel:
    """Balanced panel at times 0..n_pre+n_post-1, treated from ``n_pre`` on.

    Between consecutive pre-periods level g moves by ``tau + pre_delta_g``;
    every later interval moves by ``tau + delta_g``; ``shock`` and
    ``beta_g`` are added from the treatment time.  Noise is independent per
    period (``sd_pre`` before treatment, ``sd_post`` after).  With
    ``n_pre = n_post = 1`` the mean structure matches :func:`generate`.
    """
    if n_pre < 1 or n_post < 1:
        raise ConfigError("need at least one pre and one post period")
    g = rng if rng is not None else rngmod.stream(dgp.seed, rngmod.SIMULATION, 0)
    codes = _draw_levels(dgp, g)
    T = n_pre + n_post
    means = np.empty((len(dgp.levels), T))
    for i, lv in enumerate(dgp.levels):
        level = lv.alpha
        for t in range(T):
            if t > 0:
                level += dgp.tau + (lv.pre_delta if t < n_pre else lv.delta)
            means[i, t] = level + (dgp.shock + lv.beta if t >= n_pre else 0.0)
    y = means[codes]
    for t in range(T):
        sd = dgp.noise.sd_pre if t < n_pre else dgp.noise.sd_post
        y[:, t] += dgp.noise.draw(g, sd, dgp.n)
    labels = np.array([lv.label for lv in dgp.levels], dtype=object)[codes]
    return MultiPeriodPanel(_unit_ids(dgp.n), labels, tuple(range(T)), y, n_pre, CovariateKind.CATEGORICAL, "simulated")


@dataclass(frozen=True)
class OracleTruth:
    contrast: SubgroupContrast
    true_effect_modification: float
    true_trend_gap: float
    naive_expectation: dict[str, float]  # E[Y1 - Y0 | level]

    @property
    def parallel_trends_holds(self) -> bool:
        return self.true_trend_gap == 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "contrast": [self.contrast.level_a, self.contrast.level_b],
            "true_effect_modification": self.true_effect_modification,
            "true_trend_gap": self.true_trend_gap,
            "naive_expectation": dict(self.naive_expectation),
        }


def oracle(dgp: DgpSpec, contrast: SubgroupContrast) -> OracleTruth:
    a = dgp.level(contrast.level_a)
    b = dgp.level(contrast.level_b)
    naive = {lv.label: lv.beta + dgp.tau + dgp.shock + lv.delta for lv in dgp.levels}
    return OracleTruth(contrast, a.beta - b.beta, a.delta - b.delta, naive)


class RepOutcome(NamedTuple):
    rep: int
    estimate: float
    se: float
    ci_lower: float
    ci_upper: float
    boot_lower: float
    boot_upper: float
    p_value: float
    naive_means: tuple[float, ...]
    error: str | None = None


@dataclass(frozen=True)
class _RepJob:
    dgp: DgpSpec
    spec: EstimatorSpec
    master_seed: int
    level: float
    bootstrap_B: int
    stratified: bool


def _run_rep(job: _RepJob, r: int) -> RepOutcome:
    nan = math.nan
    naive: tuple[float, ...] = ()
    try:
        panel, _ = generate(job.dgp, rngmod.stream(job.master_seed, rngmod.SIMULATION, r))
        d, codes = panel.deltas, panel.level_codes
        by_label = {lv: float(d[codes == i].mean()) for i, lv in enumerate(panel.levels)}
        naive = tuple(by_label.get(lv.label, nan) for lv in job.dgp.levels)
        est = estimate(panel, job.spec)
        se = lo = hi = p = blo = bhi = nan
        if job.spec.basis is None:
            est = with_analytic_inference(est, panel, job.level)
            se = est.se
            lo, hi, _ = est.ci
            p = est.p_value if est.p_value is not None else nan
        if job.bootstrap_B > 0:
            boot = bootstrap_sdid(
                panel,
                job.spec,
                job.bootstrap_B,
                rngmod.derive_seed(job.master_seed, rngmod.SIM_BOOTSTRAP, r),
                job.level,
                stratified=job.stratified,
                workers=1,
            )
            blo, bhi, _ = boot.ci_percentile
            if job.spec.basis is not None:
                se = boot.se_boot
                lo, hi = confidence_interval(est.point, se, job.level)
                p = wald_test(est.point, se)[1] if se > 0 else nan
        return RepOutcome(r, est.point, se, lo, hi, blo, bhi, p, naive)
    except SdidError as exc:
        return RepOutcome(r, nan, nan, nan, nan, nan, nan, nan, naive, f"{type(exc).__name__}: {exc}")


def _run_chunk(job: _RepJob, reps: list[int]) -> list[RepOutcome]:
    return [_run_rep(job, r) for r in reps]


def _map_reps(fn, job, reps: int, workers: int | None) -> list:
    n_workers = min(rngmod.resolve_workers(workers), reps)
    if n_workers == 1:
        return fn(job, list(range(reps)))
    chunks = [list(range(i, reps, n_workers)) for i in range(n_workers)]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        parts = list(pool.map(fn, [job] * n_workers, chunks))
    return sorted((o for part in parts for o in part), key=lambda o: o.rep)


def _frac(mask: np.ndarray) -> float | None:
    return float(mask.mean()) if mask.size else None


@dataclass(frozen=True, eq=False)
class MonteCarloSummary:
    dgp: DgpSpec
    contrast: SubgroupContrast
    method: str
    reps: int
    master_seed: int
    level: float
    alpha: float
    bootstrap_B: int
    truth: OracleTruth
    outcomes: tuple[RepOutcome, ...]

    @property
    def ok(self) -> tuple[RepOutcome, ...]:
        return tuple(o for o in self.outcomes if o.error is None)

    @property
    def n_failed(self) -> int:
        return len(self.outcomes) - len(self.ok)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([o.estimate for o in self.ok])

    @property
    def mean_estimate(self) -> float:
        return float(self.estimates.mean())

    @property
    def bias(self) -> float:
        return self.mean_estimate - self.truth.true_effect_modification

    @property
    def empirical_sd(self) -> float:
        e = self.estimates
        return float(e.std(ddof=1)) if len(e) > 1 and np.ptp(e) > 0 else 0.0

    @property
    def mc_se(self) -> float:
        return self.empirical_sd / math.sqrt(len(self.ok))

    @property
    def coverage_normal(self) -> float | None:
        t = self.truth.true_effect_modification
        rows = [(o.ci_lower, o.ci_upper) for o in self.ok if math.isfinite(o.ci_lower)]
        return _frac(np.array([lo <= t <= hi for lo, hi in rows], dtype=bool))

    @property
    def coverage_bootstrap(self) -> float | None:
        t = self.truth.true_effect_modification
        rows = [(o.boot_lower, o.boot_upper) for o in self.ok if math.isfinite(o.boot_lower)]
        return _frac(np.array([lo <= t <= hi for lo, hi in rows], dtype=bool))

    @property
    def rejection_rate(self) -> float | None:
        return _frac(np.array([o.p_value < self.alpha for o in self.ok if math.isfinite(o.p_value)], dtype=bool))

    @property
    def naive_means(self) -> dict[str, float]:
        labels = [lv.label for lv in self.dgp.levels]
        arr = np.array([o.naive_means for o in self.ok if len(o.naive_means) == len(labels)])
        return {lb: float(np.nanmean(arr[:, i])) for i, lb in enumerate(labels)} if arr.size else {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "contrast": [self.contrast.level_a, self.contrast.level_b],
            "method": self.method,
            "reps": self.reps,
            "n_failed": self.n_failed,
            "master_seed": self.master_seed,
            "level": self.level,
            "alpha": self.alpha,
            "bootstrap_B": self.bootstrap_B,
            "mean_estimate": self.mean_estimate,
            "bias": self.bias,
            "empirical_sd": self.empirical_sd,
            "mc_se": self.mc_se,
            "coverage_normal": self.coverage_normal,
            "coverage_bootstrap": self.coverage_bootstrap,
            "rejection_rate": self.rejection_rate,
            "naive_means": self.naive_means,
            "oracle": self.truth.to_dict(),
            "dgp": self.dgp.to_dict(),
        }


def monte_carlo(
    dgp: DgpSpec,
    contrast: SubgroupContrast,
    spec: EstimatorSpec | None = None,
    reps: int = 500,
    master_seed: int = 0,
    level: float = 0.95,
    alpha: float = 0.05,
    bootstrap_B: int = 0,
    stratified: bool = False,
    workers: int | None = None,
    max_failure_rate: float = 0.05,
) -> MonteCarloSummary:
    """Repeat generate -> estimate -> infer and compare with the oracle.

    Rep ``r`` draws its sample from a stream keyed by ``(master_seed, r)``;
    the summary is the same for any ``workers``.  Reps whose estimator
    raises are counted; more than ``max_failure_rate`` of them is an error.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    if bootstrap_B < 0:
        raise ConfigError("bootstrap_B must be >= 0")
    spec = spec or EstimatorSpec(contrast)
    truth = oracle(dgp, contrast)
    job = _RepJob(dgp, spec, master_seed, level, bootstrap_B, stratified)
    outcomes = tuple(_map_reps(_run_chunk, job, reps, workers))
    failed = [o for o in outcomes if o.error is not None]
    if len(failed) > max_failure_rate * reps or len(failed) == reps:
        raise NumericalError(f"{len(failed)} of {reps} Monte Carlo reps failed; first failure: {failed[0].error}")
    return MonteCarloSummary(
        dgp, contrast, spec.method.value, reps, master_seed, level, alpha, bootstrap_B, truth, outcomes
    )


class PretrendsRep(NamedTuple):
    rep: int
    joint_stat: float
    p_value: float


@dataclass(frozen=True)
class _PretrendsJob:
    dgp: DgpSpec
    contrast: SubgroupContrast
    n_pre: int
    master_seed: int


def _run_pretrends_chunk(job: _PretrendsJob, reps: list[int]) -> list[PretrendsRep]:
    out = []
    for r in reps:
        mp = generate_multiperiod(job.dgp, job.n_pre, 1, rngmod.stream(job.master_seed, rngmod.SIMULATION, r))
        stat, _, p = pretrends_joint_test(interval_trend_contrasts(mp, job.contrast))
        out.append(PretrendsRep(r, stat, p))
    return out


@dataclass(frozen=True)
class PretrendsMonteCarlo:
    reps: int
    alpha: float
    df: int
    rejection_rate: float
    outcomes: tuple[PretrendsRep, ...]


def pretrends_monte_carlo(
    dgp: DgpSpec,
    contrast: SubgroupContrast,
    n_pre: int,
    reps: int = 1000,
    master_seed: int = 0,
    alpha: float = 0.05,
    workers: int | None = None,
) -> PretrendsMonteCarlo:
    """Rejection rate of the joint pre-trends test over simulated multi-period panels."""
    if n_pre < 2:
        raise ConfigError("pre-trends testing needs at least two pre-periods")
    job = _PretrendsJob(dgp, contrast, n_pre, master_seed)
    outcomes = tuple(_map_reps(_run_pretrends_chunk, job, reps, workers))
    rate = float(np.mean([o.p_value < alpha for o in outcomes]))
    return PretrendsMonteCarlo(reps, alpha, n_pre - 1, rate, outcomes)
