"""``sdid`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Messages go to stderr; reports go to stdout or ``--out``.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from sdid import __version__
from sdid.core import CovariateKind, MultiPeriodPanel, PanelDataset, SubgroupContrast, contrast_for
from sdid.errors import ConfigError, DataError, NumericalError
from sdid.estimators import (
    EstimatorSpec,
    Extrapolation,
    estimate,
    parse_basis,
    sdid_all_pairs,
)
from sdid.inference import bootstrap_sdid, with_analytic_inference, with_bootstrap_inference
from sdid.io import (
    ASSUMPTION_NOTES,
    bin_covariate,
    dump_panel,
    emit_report,
    estimate_row,
    load_panel,
    _rows_to_csv,
)
from sdid.pretrends import pretrends_report
from sdid.simlab import DgpSpec, generate, monte_carlo

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    command: str
    data_path: str | None = None
    covariate: str = "covariate"
    contrast: tuple[str, str] | None = None
    reference: str | None = None
    kind: str = "categorical"
    basis: str | None = None
    bootstrap: int = 0
    seed: int = 0
    ci: float = 0.95
    format: str = "json"
    out: str | None = None
    missing: str = "strict"
    extrapolation: str = "strict"
    stratified: bool = False
    bins: int | None = None
    layout: str = "auto"
    treatment_time: int | None = None
    alpha: float = 0.05
    base_period: int | None = None
    config_path: str | None = None
    reps: int = 500
    deterministic: bool = False
    dump_panel: str | None = None
    ledger: str | None = None
    reps_out: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.ci < 1.0:
            raise ConfigError(f"--ci must lie strictly between 0 and 1, got {self.ci}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"--alpha must lie strictly between 0 and 1, got {self.alpha}")
        if self.bootstrap < 0:
            raise ConfigError("--bootstrap must be >= 1 when given")
        if self.reps < 1:
            raise ConfigError("--reps must be >= 1")
        if self.format not in ("json", "csv", "text"):
            raise ConfigError(f"unknown --format {self.format!r}")

    def resolved(self) -> dict[str, Any]:
        """Everything that affects the result; excludes output destinations."""
        d = dataclasses.asdict(self)
        for k in ("out", "deterministic", "dump_panel", "ledger", "reps_out", "format"):
            d.pop(k)
        return d


def _envelope(cfg: RunConfig, result: dict[str, Any]) -> dict[str, Any]:
    doc = {
        "tool": "sdid",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "result": result,
        "assumption_notes": list(ASSUMPTION_NOTES),
    }
    if not cfg.deterministic:
        doc["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return doc


def _load_two_period(cfg: RunConfig) -> tuple[PanelDataset, dict[str, Any]]:
    kind = CovariateKind(cfg.kind)
    panel, _ = load_panel(cfg.data_path, cfg.layout, cfg.covariate, kind, cfg.missing, cfg.treatment_time)
    if isinstance(panel, MultiPeriodPanel):
        raise ConfigError("estimate needs two periods; use `sdid pretrends` for multi-period data")
    extra: dict[str, Any] = {}
    if cfg.bins is not None:
        panel, edges = bin_covariate(panel, cfg.bins)
        extra["binning"] = {
            "bins": cfg.bins,
            "edges": edges,
            "note": "Covariate was quantile-binned; contrasts compare bins, not covariate values.",
        }
    return panel, extra


def _infer(panel: PanelDataset, spec: EstimatorSpec, cfg: RunConfig) -> dict[str, Any]:
    est = estimate(panel, spec)
    boot = None
    if spec.basis is None:
        try:
            est = with_analytic_inference(est, panel, cfg.ci)
        except NumericalError as exc:
            est = est.with_notes(f"Analytic SE unavailable: {exc}")
    if cfg.bootstrap:
        boot = bootstrap_sdid(panel, spec, cfg.bootstrap, cfg.seed, cfg.ci, stratified=cfg.stratified)
        if spec.basis is not None:
            est = with_bootstrap_inference(est, boot)
    row = estimate_row(est, boot)
    row["assumption_notes"] = list(est.notes)
    return row


def _estimate(cfg: RunConfig) -> dict[str, Any]:
    panel, extra = _load_two_period(cfg)
    basis = parse_basis(cfg.basis) if cfg.basis else None
    if panel.covariate_kind is CovariateKind.CONTINUOUS and basis is None:
        basis = parse_basis("poly:1")
    extrap = Extrapolation(cfg.extrapolation)
    if cfg.reference is not None:
        if panel.covariate_kind is not CovariateKind.CATEGORICAL:
            raise ConfigError("--reference needs a categorical (or binned) covariate")
        pairs = [e.contrast for e in sdid_all_pairs(panel, str(cfg.reference))]
    elif cfg.contrast is not None:
        try:
            pairs = [contrast_for(panel, cfg.contrast)]
        except ValueError:
            raise ConfigError(f"contrast {cfg.contrast} is not numeric but the covariate is continuous") from None
    else:
        raise ConfigError("estimate needs --contrast A,B or --reference LEVEL")
    rows = [_infer(panel, EstimatorSpec(c, basis, extrap), cfg) for c in pairs]
    result = {"n_units": len(panel), "covariate_kind": panel.covariate_kind.value, "estimates": rows}
    if basis is not None:
        result["basis"] = basis.describe()
    result.update(extra)
    return result


def _pretrends(cfg: RunConfig) -> dict[str, Any]:
    if cfg.treatment_time is None:
        raise ConfigError("pretrends needs --treatment-time")
    mp, _ = load_panel(cfg.data_path, "long", cfg.covariate, cfg.kind, cfg.missing, cfg.treatment_time, flatten=False)
    if cfg.contrast is None:
        raise ConfigError("pretrends needs --contrast A,B")
    rep = pretrends_report(mp, contrast_for(mp, cfg.contrast), cfg.alpha, cfg.base_period)
    return rep.to_dict()


def _simulate(cfg: RunConfig) -> dict[str, Any]:
    if cfg.config_path is None:
        raise ConfigError("simulate needs --config dgp.json")
    dgp = DgpSpec.load(cfg.config_path)
    labels = [lv.label for lv in dgp.levels]
    if cfg.contrast is not None:
        a, b = cfg.contrast
    elif len(labels) >= 2:
        a, b = labels[0], labels[1]
    else:
        raise ConfigError("DGP has a single level; nothing to contrast")
    contrast = SubgroupContrast(str(a), str(b))
    dgp.level(a)
    dgp.level(b)
    basis = parse_basis(cfg.basis) if cfg.basis else None
    summary = monte_carlo(
        dgp,
        contrast,
        EstimatorSpec(contrast, basis),
        reps=cfg.reps,
        master_seed=cfg.seed,
        level=cfg.ci,
        alpha=cfg.alpha,
        bootstrap_B=cfg.bootstrap,
        stratified=cfg.stratified,
    )
    if cfg.ledger:
        _, ledger = generate(dgp)
        Path(cfg.ledger).write_text(_rows_to_csv(ledger.rows()), encoding="utf-8")
    if cfg.reps_out:
        rows = [o._asdict() | {"naive_means": ";".join(repr(v) for v in o.naive_means)} for o in summary.outcomes]
        Path(cfg.reps_out).write_text(_rows_to_csv(rows), encoding="utf-8")
    return summary.to_dict()


def _validate(cfg: RunConfig) -> dict[str, Any]:
    panel, report = load_panel(
        cfg.data_path, cfg.layout, cfg.covariate, cfg.kind, cfg.missing, cfg.treatment_time
    )
    result = report.to_dict()
    result["covariate_kind"] = panel.covariate_kind.value
    result["n_units"] = len(panel)
    if panel.covariate_kind is CovariateKind.CATEGORICAL:
        result["levels"] = list(sorted(set(panel.x.tolist())))
    if isinstance(panel, MultiPeriodPanel):
        result["times"] = list(panel.times)
        result["treatment_time"] = panel.treatment_time
    elif cfg.dump_panel:
        dump_panel(panel, cfg.dump_panel, cfg.covariate)
    return result


_COMMANDS = {"estimate": _estimate, "pretrends": _pretrends, "simulate": _simulate, "validate": _validate}


def run(cfg: RunConfig) -> tuple[int, str]:
    """Execute one command.  Returns (exit code, serialized report or "")."""
    try:
        result = _COMMANDS[cfg.command](cfg)
        return EXIT_OK, emit_report(_envelope(cfg, result), cfg.format)
    except ConfigError as exc:
        print(f"sdid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE, ""
    except DataError as exc:
        print(f"sdid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA, ""
    except NumericalError as exc:
        print(f"sdid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, ""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit 2, which we reserve for data errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: usage error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected two comma-separated levels, got {text!r}")
    return parts[0], parts[1]


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--data", dest="data_path", required=True, help="input CSV")
        p.add_argument("--covariate", default="covariate", help="covariate column name")
        p.add_argument("--kind", choices=["categorical", "continuous"], default="categorical")
        p.add_argument("--missing", choices=["strict", "drop"], default="strict")
        p.add_argument("--layout", choices=["auto", "wide", "long"], default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "csv", "text"], default="json")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp from reports")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdid", description="Subgroup difference-in-differences toolkit")
    parser.add_argument("--version", action="version", version=f"sdid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="estimate effect modification between covariate levels")
    _common(est)
    target = est.add_mutually_exclusive_group(required=True)
    target.add_argument("--contrast", type=_pair, help="A,B")
    target.add_argument("--reference", help="contrast every other level against this one")
    est.add_argument("--basis", help="saturated | poly:D | spline[:k1,k2,...]")
    est.add_argument("--bootstrap", type=int, default=0, metavar="B")
    est.add_argument("--ci", type=float, default=0.95)
    est.add_argument("--stratified", action="store_true", help="resample within covariate levels")
    est.add_argument("--extrapolation", choices=["strict", "warn"], default="strict")
    est.add_argument("--bin", dest="bins", type=int, help="quantile-bin a continuous covariate into K groups")
    est.add_argument("--treatment-time", type=int, help="for two-period long files")

    pre = sub.add_parser("pretrends", help="test parallel pre-treatment trends across levels")
    _common(pre)
    pre.add_argument("--treatment-time", type=int, required=True)
    pre.add_argument("--contrast", type=_pair, required=True)
    pre.add_argument("--alpha", type=float, default=0.05)
    pre.add_argument("--base-period", type=int)

    sim = sub.add_parser("simulate", help="Monte Carlo study of a DGP against its oracle truth")
    _common(sim, data=False)
    sim.add_argument("--config", dest="config_path", required=True, help="DGP JSON document")
    sim.add_argument("--reps", type=int, default=500)
    sim.add_argument("--contrast", type=_pair)
    sim.add_argument("--basis", help="estimate with a delta regression instead of subgroup means")
    sim.add_argument("--bootstrap", type=int, default=0, metavar="B")
    sim.add_argument("--ci", type=float, default=0.95)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--stratified", action="store_true")
    sim.add_argument("--ledger", help="write the potential-outcome ledger of one sample (CSV)")
    sim.add_argument("--reps-out", help="write per-rep results (CSV)")

    val = sub.add_parser("validate", help="validate an input file and report dropped rows")
    _common(val)
    val.add_argument("--treatment-time", type=int)
    val.add_argument("--dump-panel", help="write the validated panel back out as wide CSV")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(ns).items() if k in fields and v is not None})


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        print(f"sdid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code, text = run(cfg)
    if code == EXIT_OK:
        if cfg.out:
            Path(cfg.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
