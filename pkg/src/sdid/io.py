"""CSV ingestion, panel dumps and report serialization.

Input is RFC-4180 CSV with a header row, UTF-8.  Two layouts are read:

* wide: ``unit_id, <covariate>, y_pre, y_post``
* long: ``unit_id, <covariate>, time, y`` plus a treatment time

Reports are JSON (sorted keys, non-finite floats written as null), CSV
(one row per estimate / interval) or plain text.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from sdid.core import (
    CovariateKind,
    MissingPolicy,
    MultiPeriodPanel,
    PanelDataset,
    ValidationReport,
    validate_long,
    validate_panel,
)
from sdid.errors import ConfigError, DataError

ASSUMPTION_NOTES = (
    "Estimates contrast mean pre-post changes between covariate levels of a fully treated population.",
    "They identify effect modification (difference of conditional treatment effects) only under "
    "subgroup parallel trends: equal expected untreated change across the compared levels.",
    "That assumption is extremely strong and untestable in the treated period; a passed pre-trends "
    "test is supporting evidence only.",
    "Per-level pre-post changes are NOT estimates of per-level treatment effects.",
)


class Layout(str, enum.Enum):
    WIDE = "wide"
    LONG = "long"
    AUTO = "auto"


def _read_csv(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataError(f"{path}: empty file (a header row is required)")
            header = [h.strip() for h in reader.fieldnames]
            reader.fieldnames = header
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    return header, rows


def _require(header: Sequence[str], needed: Sequence[str], path: str | Path) -> None:
    missing = [c for c in needed if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}; found {list(header)}")


def load_panel(
    path: str | Path,
    layout: Layout | str = Layout.AUTO,
    covariate: str = "covariate",
    kind: CovariateKind | str = CovariateKind.CATEGORICAL,
    missing: MissingPolicy | str = MissingPolicy.STRICT,
    treatment_time: int | None = None,
    flatten: bool = True,
) -> tuple[PanelDataset | MultiPeriodPanel, ValidationReport]:
    """Read and validate a panel file.

    ``layout="auto"`` picks long when the header has ``time`` and ``y``
    columns.  A long file with exactly two periods is flattened to a
    :class:`PanelDataset` unless ``flatten=False``.
    """
    header, rows = _read_csv(path)
    layout = Layout(layout)
    if layout is Layout.AUTO:
        layout = Layout.LONG if {"time", "y"} <= set(header) else Layout.WIDE
    src = str(path)
    if layout is Layout.WIDE:
        _require(header, ["unit_id", covariate, "y_pre", "y_post"], path)
        recs = ({"unit_id": r["unit_id"], "x": r[covariate], "y_pre": r["y_pre"], "y_post": r["y_post"]} for r in rows)
        return validate_panel(recs, kind, missing, src, first_row=2)

    _require(header, ["unit_id", covariate, "time", "y"], path)
    recs_long = [{"unit_id": r["unit_id"], "x": r[covariate], "time": r["time"], "y": r["y"]} for r in rows]
    if treatment_time is None:
        try:
            times = sorted({int(float(r["time"])) for r in recs_long if r["time"] not in (None, "")})
        except ValueError:
            raise DataError(f"{path}: non-numeric value in the time column") from None
        if len(times) != 2:
            raise ConfigError("long-format data needs --treatment-time unless it has exactly two periods")
        treatment_time = times[1]
    mp, report = validate_long(recs_long, treatment_time, kind, missing, src, first_row=2)
    if flatten and len(mp.times) == 2:
        return mp.two_period(mp.times[0], mp.times[1]), report
    return mp, report


def dump_panel(panel: PanelDataset, path: str | Path | None = None, covariate: str = "covariate") -> str:
    """Write a wide CSV that :func:`load_panel` reads back to an identical panel."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit_id", covariate, "y_pre", "y_post"])
    for r in panel.records:
        x = r.x if isinstance(r.x, str) else repr(float(r.x))
        w.writerow([r.unit_id, x, repr(r.y_pre), repr(r.y_post)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def bin_covariate(panel: PanelDataset, k: int) -> tuple[PanelDataset, list[float]]:
    """Quantile-bin a continuous covariate into ``k`` labelled groups ``bin1..bink``.

    Binning changes the estimand to a contrast between bins.  Interior edges
    are returned so reports can state what each bin means.
    """
    if panel.covariate_kind is not CovariateKind.CONTINUOUS:
        raise ConfigError("--bin applies to continuous covariates only")
    if k < 2:
        raise ConfigError("need at least 2 bins")
    x = np.asarray(panel.x, dtype=float)
    edges = np.quantile(x, np.arange(1, k) / k)
    codes = np.searchsorted(edges, x, side="right")
    labels = [f"bin{c + 1}" for c in codes]
    binned = PanelDataset(panel.unit_ids, labels, panel.y_pre, panel.y_post, CovariateKind.CATEGORICAL, panel.provenance)
    return binned, [float(e) for e in edges]


def _clean(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_json(doc: Mapping[str, Any]) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _rows_to_csv(rows: list[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    fields = list(rows[0].keys())
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else v) for k, v in _clean(dict(r)).items()})
    return buf.getvalue()


def tabular_rows(report: Mapping[str, Any]) -> list[dict[str, Any]]:
    """Flatten a report's result into CSV rows."""
    result = report["result"]
    command = report["command"]
    if command == "estimate":
        return [{k: v for k, v in e.items() if k != "assumption_notes"} for e in result["estimates"]]
    if command == "pretrends":
        return [dict(r) for r in result["per_interval"]]
    if command == "simulate":
        flat = {k: v for k, v in result.items() if not isinstance(v, (dict, list))}
        flat["contrast"] = " vs ".join(str(c) for c in result["contrast"])
        for lv, v in result.get("naive_means", {}).items():
            flat[f"naive_mean_{lv}"] = v
        return [flat]
    if command == "validate":
        return [dict(d) for d in result["dropped"]] or [{"n_input": result["n_input"], "n_kept": result["n_kept"]}]
    raise ConfigError(f"no tabular form for command {command!r}")


def _fmt(v: Any) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def to_text(report: Mapping[str, Any]) -> str:
    lines = [f"sdid {report['version']} :: {report['command']}"]
    result = report["result"]
    command = report["command"]
    if command == "estimate":
        for e in result["estimates"]:
            lines.append(
                f"  {e['contrast']}: point={_fmt(e['point'])} se={_fmt(e['se'])} "
                f"CI{_fmt(e['level'])}=[{_fmt(e['ci_lower'])}, {_fmt(e['ci_upper'])}] "
                f"p={_fmt(e['p_value'])} n_a={_fmt(e['n_a'])} n_b={_fmt(e['n_b'])} ({e['method']})"
            )
    elif command == "pretrends":
        for r in result["per_interval"]:
            lines.append(f"  interval {r['start']}->{r['end']}: estimate={_fmt(r['estimate'])} se={_fmt(r['se'])}")
        lines.append(f"  joint chi2={_fmt(result['joint_stat'])} df={result['joint_df']} p={_fmt(result['joint_p'])}")
        lines.append(f"  {result['decision_note']}")
    elif command == "simulate":
        for k in ("reps", "n_failed", "mean_estimate", "bias", "empirical_sd", "mc_se",
                  "coverage_normal", "coverage_bootstrap", "rejection_rate"):
            lines.append(f"  {k}: {_fmt(result.get(k))}")
        lines.append(f"  oracle effect modification: {_fmt(result['oracle']['true_effect_modification'])}")
    elif command == "validate":
        lines.append(f"  rows read: {result['n_input']}, kept: {result['n_kept']}")
        for d in result["dropped"]:
            lines.append(f"  dropped row {d['row']} ({d['unit_id']}): {d['reason']}")
    lines.append("Assumptions:")
    lines.extend(f"  - {n}" for n in report.get("assumption_notes", ASSUMPTION_NOTES))
    return "\n".join(lines) + "\n"


def emit_report(report: Mapping[str, Any], fmt: str = "json") -> str:
    fmt = fmt.lower()
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return _rows_to_csv(tabular_rows(report))
    if fmt == "text":
        return to_text(report)
    raise ConfigError(f"unknown output format {fmt!r}")


def estimate_row(est, bootstrap=None) -> dict[str, Any]:
    """Stable field layout for one effect-modification estimate."""
    lo = hi = level = None
    if est.ci is not None:
        lo, hi, level = est.ci
    row = {
        "contrast": est.contrast.label(),
        "level_a": est.contrast.level_a,
        "level_b": est.contrast.level_b,
        "point": est.point,
        "se": est.se,
        "ci_lower": lo,
        "ci_upper": hi,
        "level": level,
        "z": est.z,
        "p_value": est.p_value,
        "method": est.method.value,
        "n_a": est.n_a,
        "n_b": est.n_b,
        "boot_se": None,
        "boot_ci_lower": None,
        "boot_ci_upper": None,
        "boot_B": None,
        "boot_failed": None,
    }
    if bootstrap is not None:
        row.update(
            boot_se=bootstrap.se_boot,
            boot_ci_lower=bootstrap.ci_percentile[0],
            boot_ci_upper=bootstrap.ci_percentile[1],
            boot_B=bootstrap.B,
            boot_failed=bootstrap.n_failed,
        )
    return row
