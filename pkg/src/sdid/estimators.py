"""Point estimators of effect modification.

With every unit treated, the contrast of mean pre-post changes between two
covariate levels,

    mean(d | x = a) - mean(d | x = b),

recovers the difference of the two conditional treatment effects whenever
the untreated outcomes of the two levels would have moved in parallel.
Neither conditional effect is identified on its own; only the difference is.

Categorical covariates use subgroup means.  Continuous covariates fit a
least-squares model for ``E[d | x]`` and difference its predictions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from math import comb
from typing import Any, Union

import numpy as np

from sdid.core import (
    CovariateKind,
    Level,
    PanelDataset,
    SubgroupContrast,
    level_stats,
)
from sdid.errors import ConfigError, DataError, NumericalError

PARALLEL_TRENDS_NOTE = (
    "Identifies effect modification only if the expected untreated pre-post change "
    "is equal across the two compared levels (subgroup parallel trends). "
    "This assumption is very strong and cannot be tested with two periods."
)


class Method(str, enum.Enum):
    SUBGROUP_MEANS = "subgroup_means"
    DELTA_REGRESSION = "delta_regression"


class Extrapolation(str, enum.Enum):
    STRICT = "strict"
    WARN = "warn"


@dataclass(frozen=True)
class SaturatedIndicators:
    def describe(self) -> str:
        return "saturated"


@dataclass(frozen=True)
class Polynomial:
    degree: int = 1

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ConfigError("polynomial degree must be >= 0")

    def describe(self) -> str:
        return f"poly:{self.degree}"


@dataclass(frozen=True)
class LinearSpline:
    """Piecewise-linear basis.  ``knots=None`` places ``n_knots`` at covariate quantiles."""

    knots: tuple[float, ...] | None = None
    n_knots: int = 3

    def describe(self) -> str:
        if self.knots is None:
            return "spline"
        return "spline:" + ",".join(repr(float(k)) for k in self.knots)


Basis = Union[SaturatedIndicators, Polynomial, LinearSpline]


def parse_basis(text: str) -> Basis:
    """Parse ``saturated``, ``poly:D`` or ``spline[:k1,k2,...]``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "saturated" and not arg:
            return SaturatedIndicators()
        if name == "poly":
            return Polynomial(int(arg) if arg else 1)
        if name == "spline":
            if not arg:
                return LinearSpline()
            return LinearSpline(tuple(sorted(float(k) for k in arg.split(","))))
    except ValueError:
        pass
    raise ConfigError(f"cannot parse basis {text!r}; expected saturated, poly:D or spline:k1,k2")


@dataclass(frozen=True)
class EffectModEstimate:
    contrast: SubgroupContrast
    point: float
    method: Method
    se: float | None = None
    ci: tuple[float, float, float] | None = None  # (lower, upper, level)
    z: float | None = None
    p_value: float | None = None
    n_a: int | None = None
    n_b: int | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.se is not None and not self.se >= 0:
            raise NumericalError(f"standard error must be >= 0, got {self.se}")

    def with_notes(self, *notes: str) -> EffectModEstimate:
        return replace(self, notes=self.notes + tuple(notes))


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run for a contrast.

    ``basis=None`` means subgroup means (categorical only); otherwise fit a
    delta regression with that basis and difference its predictions.
    """

    contrast: SubgroupContrast
    basis: Basis | None = None
    extrapolation: Extrapolation = Extrapolation.STRICT

    @property
    def method(self) -> Method:
        return Method.SUBGROUP_MEANS if self.basis is None else Method.DELTA_REGRESSION


def _check_level(panel: PanelDataset, level: Level) -> None:
    if level not in panel.levels:
        raise DataError(f"unknown covariate level {level!r}; available levels: {list(panel.levels)}")


def sdid_categorical(panel: PanelDataset, contrast: SubgroupContrast) -> EffectModEstimate:
    """Difference of the two levels' mean pre-post changes."""
    if panel.covariate_kind is not CovariateKind.CATEGORICAL:
        raise DataError("sdid_categorical needs a categorical covariate")
    _check_level(panel, contrast.level_a)
    _check_level(panel, contrast.level_b)
    a = level_stats(panel, contrast.level_a)
    if contrast.is_trivial:
        return EffectModEstimate(contrast, 0.0, Method.SUBGROUP_MEANS, n_a=a.n, n_b=a.n, notes=(PARALLEL_TRENDS_NOTE,))
    b = level_stats(panel, contrast.level_b)
    return EffectModEstimate(
        contrast, a.mean - b.mean, Method.SUBGROUP_MEANS, n_a=a.n, n_b=b.n, notes=(PARALLEL_TRENDS_NOTE,)
    )


def sdid_all_pairs(panel: PanelDataset, reference: Level) -> list[EffectModEstimate]:
    """Every other level against ``reference``.

    Each row rests on its own parallel-trends assumption between that level
    and the reference.  No multiplicity adjustment is applied.
    """
    _check_level(panel, reference)
    out = []
    for level in panel.levels:
        if level == reference:
            continue
        est = sdid_categorical(panel, SubgroupContrast(level, reference))
        out.append(est.with_notes(f"Separate parallel-trends assumption for {level} vs {reference}."))
    return out


@dataclass(frozen=True, eq=False)
class DeltaModel:
    """Least-squares fit of ``d`` on a basis expansion of the covariate.

    Polynomial and spline bases are evaluated on ``z = (x - center) / scale``,
    which maps the observed range onto [-1, 1]; ``coefficients`` refer to
    that transformed basis.  Saturated fits have one coefficient per level
    (the level mean) and no transform.
    """

    basis: Basis
    coefficients: np.ndarray
    kind: CovariateKind
    n: int
    residual_variance: float
    condition_number: float
    center: float = 0.0
    scale: float = 1.0
    x_min: float | None = None
    x_max: float | None = None
    levels: tuple[str, ...] = ()
    level_counts: tuple[int, ...] = ()

    @property
    def dim(self) -> int:
        return len(self.coefficients)

    def design(self, x: Any) -> np.ndarray:
        return _design(self.basis, np.asarray(x), self.center, self.scale, self.levels)

    def predict(self, x: Any) -> np.ndarray:
        return self.design(np.atleast_1d(np.asarray(x, dtype=object if self.kind is CovariateKind.CATEGORICAL else float))) @ self.coefficients

    def raw_polynomial_coefficients(self) -> np.ndarray:
        """Coefficients of the fitted polynomial in powers of ``x`` itself."""
        if not isinstance(self.basis, Polynomial):
            raise ConfigError("raw coefficients exist only for polynomial bases")
        deg = self.basis.degree
        raw = np.zeros(deg + 1)
        c, s = self.center, self.scale
        for k, b in enumerate(self.coefficients):
            for j in range(k + 1):
                raw[j] += b * comb(k, j) * (-c) ** (k - j) / s**k
        return raw


def _design(basis: Basis, x: np.ndarray, center: float, scale: float, levels: tuple[str, ...]) -> np.ndarray:
    if isinstance(basis, SaturatedIndicators):
        x = np.asarray([str(v) for v in x], dtype=object)
        return np.column_stack([(x == lv).astype(float) for lv in levels]) if levels else np.zeros((len(x), 0))
    z = (np.asarray(x, dtype=float) - center) / scale
    if isinstance(basis, Polynomial):
        return np.vander(z, basis.degree + 1, increasing=True)
    knots_z = (np.asarray(basis.knots, dtype=float) - center) / scale
    cols = [np.ones_like(z), z] + [np.maximum(z - k, 0.0) for k in knots_z]
    return np.column_stack(cols)


def _back_substitute(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = len(b)
    out = np.zeros(p)
    for i in range(p - 1, -1, -1):
        out[i] = (b[i] - r[i, i + 1 :] @ out[i + 1 :]) / r[i, i]
    return out


def _least_squares(design: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Solve min ||design @ beta - d|| by Householder QR.  Returns (beta, rss, cond)."""
    n, p = design.shape
    q, r = np.linalg.qr(design, mode="reduced")
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag.max() if p else 0.0)
    if p == 0 or diag.min() <= tol:
        raise NumericalError(
            f"rank-deficient design ({p} columns, smallest |R_ii| = {diag.min() if p else 0.0:.3g}, "
            f"tolerance {tol:.3g}); reduce the basis or add covariate variation"
        )
    cond = float(np.linalg.cond(r))
    beta = _back_substitute(r, q.T @ d)
    resid = d - design @ beta
    return beta, float(resid @ resid), cond


def _resolve_knots(basis: LinearSpline, x: np.ndarray) -> LinearSpline:
    lo, hi = float(x.min()), float(x.max())
    if basis.knots is None:
        qs = np.arange(1, basis.n_knots + 1) / (basis.n_knots + 1)
        cand = np.quantile(x, qs)
    else:
        cand = np.asarray(basis.knots, dtype=float)
    knots = tuple(float(k) for k in np.unique(cand) if lo < k < hi)
    return LinearSpline(knots, basis.n_knots)


def fit_arrays(x: np.ndarray, d: np.ndarray, basis: Basis, kind: CovariateKind) -> DeltaModel:
    """Fit on raw columns; :func:`fit_delta_regression` is the panel-level entry point."""
    n = len(d)
    levels: tuple[str, ...] = ()
    counts: tuple[int, ...] = ()
    center, scale = 0.0, 1.0
    x_min = x_max = None
    if isinstance(basis, SaturatedIndicators):
        if kind is not CovariateKind.CATEGORICAL:
            raise ConfigError("saturated indicators need a categorical covariate")
        xs = [str(v) for v in x]
        levels = tuple(sorted(set(xs)))
        counts = tuple(xs.count(lv) for lv in levels)
    else:
        if kind is not CovariateKind.CONTINUOUS:
            raise ConfigError(f"{basis.describe()} basis needs a continuous covariate")
        x = np.asarray(x, dtype=float)
        x_min, x_max = float(x.min()), float(x.max())
        center = (x_min + x_max) / 2.0
        half = (x_max - x_min) / 2.0
        scale = half if half > 0 else 1.0
        if isinstance(basis, LinearSpline):
            basis = _resolve_knots(basis, x)
    design = _design(basis, x, center, scale, levels)
    p = design.shape[1]
    if n <= p:
        raise DataError(f"need more units than basis functions (n = {n}, basis dimension = {p})")
    beta, rss, cond = _least_squares(design, np.asarray(d, dtype=float))
    return DeltaModel(
        basis=basis,
        coefficients=beta,
        kind=kind,
        n=n,
        residual_variance=rss / (n - p),
        condition_number=cond,
        center=center,
        scale=scale,
        x_min=x_min,
        x_max=x_max,
        levels=levels,
        level_counts=counts,
    )


def fit_delta_regression(panel: PanelDataset, basis: Basis) -> DeltaModel:
    return fit_arrays(panel.x, panel.deltas, basis, panel.covariate_kind)


def sdid_continuous(
    model: DeltaModel,
    contrast: SubgroupContrast,
    extrapolation: Extrapolation | str = Extrapolation.STRICT,
) -> EffectModEstimate:
    """``m(level_a) - m(level_b)`` for the fitted conditional mean ``m`` of ``d``."""
    policy = Extrapolation(extrapolation)
    notes = [PARALLEL_TRENDS_NOTE]
    n_a = n_b = None
    if isinstance(model.basis, SaturatedIndicators):
        a, b = str(contrast.level_a), str(contrast.level_b)
        for lv in (a, b):
            if lv not in model.levels:
                raise DataError(f"unknown covariate level {lv!r}; available levels: {list(model.levels)}")
        n_a = model.level_counts[model.levels.index(a)]
        n_b = model.level_counts[model.levels.index(b)]
        values = [a, b]
    else:
        values = [float(contrast.level_a), float(contrast.level_b)]
        for v in values:
            if not model.x_min <= v <= model.x_max:
                msg = f"contrast value {v} lies outside the observed covariate range [{model.x_min}, {model.x_max}]"
                if policy is Extrapolation.STRICT:
                    raise DataError(msg)
                notes.append("Extrapolation: " + msg)
    if contrast.is_trivial:
        point = 0.0
    else:
        fa, fb = model.predict(values)
        point = float(fa - fb)
    return EffectModEstimate(contrast, point, Method.DELTA_REGRESSION, n_a=n_a, n_b=n_b, notes=tuple(notes))


def estimate(panel: PanelDataset, spec: EstimatorSpec) -> EffectModEstimate:
    if spec.basis is None:
        return sdid_categorical(panel, spec.contrast)
    model = fit_delta_regression(panel, spec.basis)
    return sdid_continuous(model, spec.contrast, spec.extrapolation)
