"""Data model shared by every estimator.

A unit is observed once before and once after a policy that reaches every
unit.  The only per-unit quantity the estimators ever need is the pre-post
change ``d = y_post - y_pre``; everything else is bookkeeping around it.

Panels store their columns as read-only numpy arrays.  ``records`` rebuilds
the row view on demand.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Any, NamedTuple, Union

import numpy as np

from sdid.errors import DataError

Level = Union[str, float]

_MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


class CovariateKind(str, enum.Enum):
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


class MissingPolicy(str, enum.Enum):
    """What to do with a row whose covariate or outcome is missing."""

    STRICT = "strict"
    DROP = "drop"


@dataclass(frozen=True)
class UnitRecord:
    unit_id: str
    x: Level
    y_pre: float
    y_post: float


@dataclass(frozen=True)
class SubgroupContrast:
    """Ordered pair of covariate values ``(level_a, level_b)``."""

    level_a: Level
    level_b: Level

    def reversed(self) -> SubgroupContrast:
        return SubgroupContrast(self.level_b, self.level_a)

    @property
    def is_trivial(self) -> bool:
        return self.level_a == self.level_b

    def label(self) -> str:
        return f"{self.level_a} vs {self.level_b}"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Validated two-period panel, one row per unit.

    Built through :func:`validate_panel` (or :meth:`from_arrays` for already
    clean numeric input).  Construction checks every invariant again, so a
    ``PanelDataset`` in hand is always usable by the estimators.
    """

    unit_ids: tuple[str, ...]
    x: np.ndarray
    y_pre: np.ndarray
    y_post: np.ndarray
    covariate_kind: CovariateKind = CovariateKind.CATEGORICAL
    provenance: str = "in-memory"

    def __post_init__(self) -> None:
        n = len(self.unit_ids)
        if n == 0:
            raise DataError("panel is empty after validation")
        if len(set(self.unit_ids)) != n:
            seen: set[str] = set()
            dup = next(u for u in self.unit_ids if u in seen or seen.add(u))
            raise DataError(f"duplicate unit_id {dup!r}")
        kind = CovariateKind(self.covariate_kind)
        if kind is CovariateKind.CATEGORICAL:
            x = np.array([str(v) for v in self.x], dtype=object)
        else:
            x = np.asarray(self.x, dtype=float)
            if not np.all(np.isfinite(x)):
                raise DataError("continuous covariate contains non-finite values")
        y_pre = np.asarray(self.y_pre, dtype=float)
        y_post = np.asarray(self.y_post, dtype=float)
        if not (len(x) == len(y_pre) == len(y_post) == n):
            raise DataError("column lengths disagree")
        if not (np.all(np.isfinite(y_pre)) and np.all(np.isfinite(y_post))):
            raise DataError("outcomes must be finite")
        object.__setattr__(self, "covariate_kind", kind)
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y_pre", _readonly(y_pre))
        object.__setattr__(self, "y_post", _readonly(y_post))

    @classmethod
    def from_records(
        cls,
        records: Iterable[UnitRecord],
        covariate_kind: CovariateKind = CovariateKind.CATEGORICAL,
        provenance: str = "in-memory",
    ) -> PanelDataset:
        records = list(records)
        return cls(
            unit_ids=tuple(r.unit_id for r in records),
            x=[r.x for r in records],
            y_pre=[r.y_pre for r in records],
            y_post=[r.y_post for r in records],
            covariate_kind=covariate_kind,
            provenance=provenance,
        )

    def __len__(self) -> int:
        return len(self.unit_ids)

    @property
    def records(self) -> tuple[UnitRecord, ...]:
        if self.covariate_kind is CovariateKind.CATEGORICAL:
            xs = [str(v) for v in self.x]
        else:
            xs = [float(v) for v in self.x]
        return tuple(
            UnitRecord(u, xv, float(a), float(b))
            for u, xv, a, b in zip(self.unit_ids, xs, self.y_pre, self.y_post)
        )

    @cached_property
    def deltas(self) -> np.ndarray:
        return _readonly(self.y_post - self.y_pre)

    @cached_property
    def levels(self) -> tuple[Level, ...]:
        """Distinct covariate values in sorted order."""
        if self.covariate_kind is CovariateKind.CATEGORICAL:
            return tuple(sorted(set(self.x.tolist())))
        return tuple(float(v) for v in np.unique(self.x))

    @cached_property
    def level_codes(self) -> np.ndarray:
        """Index of each unit's level in :attr:`levels`."""
        lookup = {lv: i for i, lv in enumerate(self.levels)}
        return _readonly(np.fromiter((lookup[v] for v in self.x.tolist()), dtype=np.intp, count=len(self)))

    def replace_outcomes(self, y_pre: np.ndarray, y_post: np.ndarray) -> PanelDataset:
        return PanelDataset(self.unit_ids, self.x, y_pre, y_post, self.covariate_kind, self.provenance)

    def same_as(self, other: PanelDataset) -> bool:
        return (
            self.unit_ids == other.unit_ids
            and self.covariate_kind is other.covariate_kind
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y_pre, other.y_pre)
            and np.array_equal(self.y_post, other.y_post)
        )


@dataclass(frozen=True)
class DroppedRow:
    row: int
    unit_id: str | None
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    n_input: int
    n_kept: int
    dropped: tuple[DroppedRow, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_input": self.n_input,
            "n_kept": self.n_kept,
            "n_dropped": len(self.dropped),
            "dropped": [{"row": d.row, "unit_id": d.unit_id, "reason": d.reason} for d in self.dropped],
        }


def _is_missing(v: Any) -> bool:
    if v is None:
        return True
    if isinstance(v, float) and math.isnan(v):
        return True
    return isinstance(v, str) and v.strip().lower() in _MISSING_TOKENS


def _parse_real(v: Any, what: str, row: int) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise DataError(f"row {row}: cannot parse {what} {v!r} as a number") from None


def validate_panel(
    rows: Iterable[Mapping[str, Any]],
    covariate_kind: CovariateKind | str = CovariateKind.CATEGORICAL,
    missing: MissingPolicy | str = MissingPolicy.STRICT,
    provenance: str = "in-memory",
    first_row: int = 1,
) -> tuple[PanelDataset, ValidationReport]:
    """Turn raw rows into a :class:`PanelDataset`.

    Each row needs the keys ``unit_id``, ``x``, ``y_pre`` and ``y_post``.
    Values may be strings (as read from CSV) or numbers.  A missing or
    non-finite covariate/outcome raises under ``MissingPolicy.STRICT`` and is
    dropped and reported under ``MissingPolicy.DROP``.  Text that is present
    but not numeric always raises, as does a duplicated ``unit_id``.

    ``first_row`` sets the number reported for the first row (CSV readers
    pass 2 so that numbers match file lines).
    """
    kind = CovariateKind(covariate_kind)
    policy = MissingPolicy(missing)
    ids: list[str] = []
    xs: list[Level] = []
    pre: list[float] = []
    post: list[float] = []
    dropped: list[DroppedRow] = []
    seen: set[str] = set()
    n_input = 0

    for i, raw in enumerate(rows):
        n_input += 1
        row = first_row + i
        uid = raw.get("unit_id")
        if _is_missing(uid):
            raise DataError(f"row {row}: missing unit_id")
        uid = str(uid).strip()
        if uid in seen:
            raise DataError(f"row {row}: duplicate unit_id {uid!r}")
        seen.add(uid)

        problem = None
        xv = raw.get("x")
        if _is_missing(xv):
            problem = "missing covariate"
        elif kind is CovariateKind.CONTINUOUS:
            xv = _parse_real(xv, "covariate", row)
            if not math.isfinite(xv):
                problem = "non-finite covariate"
        else:
            xv = str(xv).strip()

        outcomes = []
        for name in ("y_pre", "y_post"):
            v = raw.get(name)
            if _is_missing(v):
                problem = problem or f"missing {name}"
                outcomes.append(math.nan)
                continue
            v = _parse_real(v, name, row)
            if not math.isfinite(v):
                problem = problem or f"non-finite {name}"
            outcomes.append(v)

        if problem is not None:
            if policy is MissingPolicy.STRICT:
                raise DataError(f"row {row}: unit {uid!r} has {problem} (use the drop policy to exclude it)")
            dropped.append(DroppedRow(row, uid, problem))
            continue
        ids.append(uid)
        xs.append(xv)
        pre.append(outcomes[0])
        post.append(outcomes[1])

    if not ids:
        raise DataError("panel is empty after validation")
    panel = PanelDataset(tuple(ids), xs, pre, post, kind, provenance)
    return panel, ValidationReport(n_input, len(ids), tuple(dropped))


@dataclass(frozen=True, eq=False)
class MultiPeriodPanel:
    """Balanced panel observed at several integer times.

    ``outcomes[i, j]`` is unit ``i`` at ``times[j]``.  ``treatment_time`` is
    the first treated period; at least one listed time precedes it.
    """

    unit_ids: tuple[str, ...]
    x: np.ndarray
    times: tuple[int, ...]
    outcomes: np.ndarray
    treatment_time: int
    covariate_kind: CovariateKind = CovariateKind.CATEGORICAL
    provenance: str = "in-memory"

    def __post_init__(self) -> None:
        times = tuple(int(t) for t in self.times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataError("time indices must be strictly increasing")
        if self.treatment_time not in times:
            raise DataError(f"treatment_time {self.treatment_time} is not among the observed times {list(times)}")
        if times[0] >= self.treatment_time:
            raise DataError("no pre-treatment period before treatment_time")
        y = np.asarray(self.outcomes, dtype=float)
        n = len(self.unit_ids)
        if y.shape != (n, len(times)):
            raise DataError(f"outcome matrix has shape {y.shape}, expected {(n, len(times))}")
        if not np.all(np.isfinite(y)):
            raise DataError("outcomes must be finite")
        if len(set(self.unit_ids)) != n:
            raise DataError("duplicate unit_id")
        kind = CovariateKind(self.covariate_kind)
        x = np.array([str(v) for v in self.x], dtype=object) if kind is CovariateKind.CATEGORICAL else np.asarray(self.x, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "covariate_kind", kind)
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "outcomes", _readonly(y))

    def __len__(self) -> int:
        return len(self.unit_ids)

    @property
    def pre_times(self) -> tuple[int, ...]:
        return tuple(t for t in self.times if t < self.treatment_time)

    @property
    def post_times(self) -> tuple[int, ...]:
        return tuple(t for t in self.times if t >= self.treatment_time)

    def column(self, t: int) -> np.ndarray:
        try:
            return self.outcomes[:, self.times.index(t)]
        except ValueError:
            raise DataError(f"period {t} not observed; available periods {list(self.times)}") from None

    def two_period(self, t0: int, t1: int) -> PanelDataset:
        """Panel with ``y_pre = Y_t0`` and ``y_post = Y_t1``."""
        return PanelDataset(self.unit_ids, self.x, self.column(t0), self.column(t1), self.covariate_kind, self.provenance)


def validate_long(
    rows: Iterable[Mapping[str, Any]],
    treatment_time: int,
    covariate_kind: CovariateKind | str = CovariateKind.CATEGORICAL,
    missing: MissingPolicy | str = MissingPolicy.STRICT,
    provenance: str = "in-memory",
    first_row: int = 1,
) -> tuple[MultiPeriodPanel, ValidationReport]:
    """Build a :class:`MultiPeriodPanel` from long rows (``unit_id, x, time, y``).

    Under the drop policy a unit with any missing value loses all its rows.
    Unbalanced input is always an error.
    """
    kind = CovariateKind(covariate_kind)
    policy = MissingPolicy(missing)
    units: dict[str, dict[str, Any]] = {}
    bad: dict[str, DroppedRow] = {}
    n_input = 0
    for i, raw in enumerate(rows):
        n_input += 1
        row = first_row + i
        uid = raw.get("unit_id")
        if _is_missing(uid):
            raise DataError(f"row {row}: missing unit_id")
        uid = str(uid).strip()
        t_raw = raw.get("time")
        if _is_missing(t_raw):
            raise DataError(f"row {row}: missing time")
        t = _parse_real(t_raw, "time", row)
        if t != int(t):
            raise DataError(f"row {row}: time {t_raw!r} is not an integer")
        t = int(t)
        unit = units.setdefault(uid, {"x": None, "y": {}, "row": row})

        problem = None
        xv = raw.get("x")
        if _is_missing(xv):
            problem = "missing covariate"
        elif kind is CovariateKind.CONTINUOUS:
            xv = _parse_real(xv, "covariate", row)
            if not math.isfinite(xv):
                problem = "non-finite covariate"
        else:
            xv = str(xv).strip()
        yv = raw.get("y")
        if _is_missing(yv):
            problem = problem or "missing y"
        else:
            yv = _parse_real(yv, "y", row)
            if not math.isfinite(yv):
                problem = problem or "non-finite y"
        if problem is not None:
            if policy is MissingPolicy.STRICT:
                raise DataError(f"row {row}: unit {uid!r} has {problem} at time {t}")
            bad.setdefault(uid, DroppedRow(row, uid, f"{problem} at time {t}"))
            continue
        if unit["x"] is not None and unit["x"] != xv:
            raise DataError(f"row {row}: covariate of unit {uid!r} changes over time")
        unit["x"] = xv
        if t in unit["y"]:
            raise DataError(f"row {row}: unit {uid!r} has two rows for time {t}")
        unit["y"][t] = yv

    kept = [u for u in units if u not in bad]
    if not kept:
        raise DataError("panel is empty after validation")
    all_times = sorted({t for u in kept for t in units[u]["y"]})
    for u in kept:
        missing_t = [t for t in all_times if t not in units[u]["y"]]
        if missing_t:
            raise DataError(f"unbalanced panel: unit {u!r} is not observed at time(s) {missing_t}")
    outcomes = np.array([[units[u]["y"][t] for t in all_times] for u in kept], dtype=float)
    panel = MultiPeriodPanel(
        tuple(kept), [units[u]["x"] for u in kept], tuple(all_times), outcomes, int(treatment_time), kind, provenance
    )
    return panel, ValidationReport(n_input, len(kept), tuple(bad.values()))


class UnitDelta(NamedTuple):
    unit_id: str
    x: Level
    d: float


def unit_deltas(panel: PanelDataset) -> list[UnitDelta]:
    """Per-unit pre-post change, in record order."""
    return [UnitDelta(r.unit_id, r.x, r.y_post - r.y_pre) for r in panel.records]


class LevelStats(NamedTuple):
    level: Level
    n: int
    mean: float
    var: float  # nan when n == 1

    @property
    def var_defined(self) -> bool:
        return self.n >= 2


def subgroup_stats(panel: PanelDataset) -> tuple[LevelStats, ...]:
    """Count, mean and unbiased variance of ``d`` within each covariate level."""
    if panel.covariate_kind is not CovariateKind.CATEGORICAL:
        raise DataError("subgroup_stats needs a categorical covariate")
    d = panel.deltas
    codes = panel.level_codes
    out = []
    for i, level in enumerate(panel.levels):
        dg = d[codes == i]
        n = len(dg)
        var = float(np.var(dg, ddof=1)) if n >= 2 else math.nan
        out.append(LevelStats(level, n, float(np.mean(dg)), var))
    return tuple(out)


def level_stats(panel: PanelDataset, level: Level) -> LevelStats:
    for s in subgroup_stats(panel):
        if s.level == level:
            return s
    raise DataError(f"unknown covariate level {level!r}; available levels: {list(panel.levels)}")


def as_level(panel: PanelDataset | MultiPeriodPanel, value: Any) -> Level:
    """Coerce a user-supplied level to the panel's covariate type."""
    if panel.covariate_kind is CovariateKind.CATEGORICAL:
        return str(value)
    return float(value)


def contrast_for(panel: PanelDataset | MultiPeriodPanel, pair: Sequence[Any]) -> SubgroupContrast:
    a, b = pair
    return SubgroupContrast(as_level(panel, a), as_level(panel, b))
