"""Command-line front end: validate, synth, backtest, report.

Exit codes: 0 success, 2 input error (unreadable or unusable data),
3 config error (bad flags, config file, or parameter combination),
4 runtime failure. Every output file is written atomically (temp file +
rename) and carries no timestamps, so reruns on identical inputs are
byte-identical.

Runs are reproducible from a flat key-value config file::

    # one 'key = value' per line, '#' comments, keys repeatable where noted
    cases = data/cases.csv
    mobility = apple_drive=data/apple.csv   # repeatable
    train_len = 60
    baseline_window = 2020-02-17:2020-03-07

Flags override config-file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

from . import __version__
from .backtest import (
    BacktestError, WindowSpec, records_from_csv, records_to_csv, run_backtest,
)
from .charts import ci_chart_svg
from .elasticnet import DEFAULT_VAL_LEN, ElasticNetError, grid_for_estimator
from .metrics import MetricsError, ci_series, summarize
from .panel import (
    LONG_SCHEMA, NYT_SCHEMA, DateIndex, Panel, PanelError, align,
    filter_complete, load_panel_csv, write_panel_csv,
)
from .preprocess import (
    BaselineWindow, PreprocessError, baseline_panel, rolling_mean_panel,
)
from .synth import RNG_IDENTITY, SynthConfig, SynthError, generate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

DEFAULT_BASELINE_WINDOW = "2020-02-17:2020-03-07"
SCHEMAS = {"long": LONG_SCHEMA, "nyt": NYT_SCHEMA}


class ConfigError(ValueError):
    """Bad flag, config-file line, or parameter combination."""


@dataclass
class RunConfig:
    """Everything one backtest run needs; mirrors the CLI surface."""

    case_csv: Path
    mobility_csvs: list[tuple[str, Path]]
    output_dir: Path
    cases_schema: str = "long"
    start_date: date | None = None
    end_date: date | None = None
    baseline_window: BaselineWindow | None = None
    window_spec: WindowSpec = field(default_factory=WindowSpec)
    estimator: str = "elasticnet"
    lambdas: tuple[float, ...] | None = None
    val_len: int = DEFAULT_VAL_LEN
    smooth_window: int = 7
    jobs: int = 1


def _fail(stage: str, exc: object, code: int) -> int:
    print(f"mobibench: error [{stage}]: {exc}", file=sys.stderr)
    return code


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _parse_date(raw: str, what: str) -> date:
    try:
        return date.fromisoformat(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: expected ISO date YYYY-MM-DD, got {raw!r}") from exc


def _parse_baseline_window(raw: str) -> BaselineWindow | None:
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    parts = raw.split(":")
    if len(parts) != 2:
        raise ConfigError(f"baseline window: expected START:END or 'none', got {raw!r}")
    try:
        return BaselineWindow(_parse_date(parts[0], "baseline start"),
                              _parse_date(parts[1], "baseline end"))
    except PreprocessError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_mobility_entry(raw: str) -> tuple[str, Path]:
    label, sep, path = raw.partition("=")
    label = label.strip()
    if not sep or not label or not path.strip():
        raise ConfigError(f"mobility: expected label=path, got {raw!r}")
    if not all(ch.isalnum() or ch in "_.-" for ch in label):
        raise ConfigError(f"mobility label {label!r} may use only letters, digits, _ . -")
    return label, Path(path.strip())


def _parse_kv_config(path: Path) -> dict[str, list[str]]:
    """Flat key = value file; '#' comments; repeated keys accumulate."""
    out: dict[str, list[str]] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        out.setdefault(key.strip(), []).append(value.strip())
    return out


def _take(args_value, file_cfg: dict[str, list[str]], key: str, default: str | None) -> str | None:
    """Flag value if given, else last config-file value, else default."""
    if args_value is not None:
        return str(args_value)
    if key in file_cfg:
        return file_cfg[key][-1]
    return default


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_cfg = _parse_kv_config(Path(args.config)) if args.config else {}

    cases = _take(args.cases, file_cfg, "cases", None)
    if not cases:
        raise ConfigError("no case CSV given (--cases or 'cases =' in the config file)")
    mobility_raw: list[str] = list(args.mobility or []) or file_cfg.get("mobility", [])
    if not mobility_raw:
        raise ConfigError("no mobility dataset given (--mobility label=path, repeatable)")
    mobility = [_parse_mobility_entry(m) for m in mobility_raw]
    labels = [label for label, _ in mobility]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate mobility labels: {sorted(labels)}")

    schema = _take(args.cases_schema, file_cfg, "cases_schema", "long")
    if schema not in SCHEMAS:
        raise ConfigError(f"cases schema must be one of {sorted(SCHEMAS)}, got {schema!r}")
    estimator = _take(args.estimator, file_cfg, "estimator", "elasticnet")

    try:
        train_len = int(_take(args.train_len, file_cfg, "train_len", "60"))
        lookaheads = tuple(
            int(tok) for tok in
            _take(args.lookaheads, file_cfg, "lookaheads", "1,7,14,21,28").split(",")
        )
        mobility_lag = int(_take(args.mobility_lag, file_cfg, "mobility_lag", "10"))
        stride = int(_take(args.stride, file_cfg, "stride", "1"))
        val_len = int(_take(args.val_len, file_cfg, "val_len", str(DEFAULT_VAL_LEN)))
        smooth_window = int(_take(args.smooth_window, file_cfg, "smooth_window", "7"))
        jobs = int(_take(args.jobs, file_cfg, "jobs", "1"))
    except ValueError as exc:
        raise ConfigError(f"bad numeric parameter: {exc}") from exc
    if val_len < 1:
        raise ConfigError(f"val_len must be >= 1, got {val_len}")
    if smooth_window < 1:
        raise ConfigError(f"smooth_window must be >= 1, got {smooth_window}")
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")

    try:
        window_spec = WindowSpec(train_len=train_len, lookaheads=lookaheads,
                                 mobility_lag=mobility_lag, stride=stride)
    except BacktestError as exc:
        raise ConfigError(str(exc)) from exc

    lambdas_raw = _take(args.lambdas, file_cfg, "lambdas", None)
    lambdas = None
    if lambdas_raw:
        try:
            lambdas = tuple(float(tok) for tok in lambdas_raw.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad lambda list {lambdas_raw!r}") from exc
    try:
        grid_for_estimator(estimator, lambdas)  # validates estimator/lambdas now
    except ElasticNetError as exc:
        raise ConfigError(str(exc)) from exc

    start_raw = _take(args.start_date, file_cfg, "start_date", None)
    end_raw = _take(args.end_date, file_cfg, "end_date", None)
    baseline_raw = _take(args.baseline_window, file_cfg, "baseline_window",
                         DEFAULT_BASELINE_WINDOW)

    case_path = Path(cases)
    for label, path in mobility:
        if path == case_path:
            raise ConfigError(f"mobility {label!r} points at the case CSV {path}")

    return RunConfig(
        case_csv=case_path,
        mobility_csvs=mobility,
        output_dir=Path(_take(args.out, file_cfg, "out", "out")),
        cases_schema=schema,
        start_date=_parse_date(start_raw, "start_date") if start_raw else None,
        end_date=_parse_date(end_raw, "end_date") if end_raw else None,
        baseline_window=_parse_baseline_window(baseline_raw),
        window_spec=window_spec,
        estimator=estimator,
        lambdas=lambdas,
        val_len=val_len,
        smooth_window=smooth_window,
        jobs=jobs,
    )


def _study_index(cfg: RunConfig, panels: list[Panel]) -> DateIndex:
    """Explicit start/end when given, else the intersection of all panels."""
    common = panels[0].index
    for p in panels[1:]:
        nxt = common.intersect(p.index)
        if nxt is None:
            raise PanelError(f"panels {panels[0].name!r} and {p.name!r} share no dates")
        common = nxt
    start = cfg.start_date or common.start
    end = cfg.end_date or common.end
    index = DateIndex.from_range(start, end)
    need = cfg.window_spec.train_len + cfg.window_spec.max_lookahead
    if index.length < need:
        raise ConfigError(
            f"study range {start}..{end} has {index.length} days; the window protocol "
            f"needs at least {need}"
        )
    return index


def _ci_csv_text(points) -> str:
    lines = ["date,lookahead,rho_mobility,rho_baseline,ci,n_counties"]
    for p in points:
        lines.append(
            f"{p.date.isoformat()},{p.lookahead},{p.rho_mobility!r},"
            f"{p.rho_baseline!r},{p.ci!r},{p.n_counties}"
        )
    return "\n".join(lines) + "\n"


def _emit_dataset(label: str, records, out_dir: Path) -> dict:
    """predictions_<label>.csv, ci_<label>.csv, ci_<label>.svg; returns summary."""
    pred_path = out_dir / f"predictions_{label}.csv"
    tmp = pred_path.with_name(pred_path.name + ".tmp")
    records_to_csv(records, tmp)
    os.replace(tmp, pred_path)

    points = ci_series(records)
    if not points:
        raise MetricsError(
            f"dataset {label!r} produced no ci points (every (date, lookahead) "
            f"group fell below the minimum county count)"
        )
    _atomic_write_text(out_dir / f"ci_{label}.csv", _ci_csv_text(points))
    _atomic_write_text(out_dir / f"ci_{label}.svg",
                       ci_chart_svg(points, f"correlation improvement: {label}"))
    return summarize(points)


def _summary_json(cfg: RunConfig, study: DateIndex, summaries: dict[str, dict]) -> str:
    payload = {
        "datasets": {
            label: {str(l): entry for l, entry in summary.items()}
            for label, summary in summaries.items()
        },
        "params": {
            "estimator": cfg.estimator,
            "train_len": cfg.window_spec.train_len,
            "lookaheads": list(cfg.window_spec.lookaheads),
            "mobility_lag": cfg.window_spec.mobility_lag,
            "stride": cfg.window_spec.stride,
            "val_len": cfg.val_len,
            "smooth_window": cfg.smooth_window,
            "baseline_window": (
                f"{cfg.baseline_window.start.isoformat()}:{cfg.baseline_window.end.isoformat()}"
                if cfg.baseline_window else None
            ),
            "study_start": study.start.isoformat(),
            "study_end": study.end.isoformat(),
        },
        "version": __version__,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def cmd_backtest(cfg: RunConfig) -> int:
    try:
        case_panel = load_panel_csv(cfg.case_csv, SCHEMAS[cfg.cases_schema])
        mobility_panels = [
            (label, load_panel_csv(path, LONG_SCHEMA, name=label))
            for label, path in cfg.mobility_csvs
        ]
    except PanelError as exc:
        return _fail("load", exc, EXIT_INPUT)

    try:
        study = _study_index(cfg, [case_panel] + [p for _, p in mobility_panels])
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except PanelError as exc:
        return _fail("load", exc, EXIT_INPUT)

    try:
        cases_smooth = rolling_mean_panel(case_panel, cfg.smooth_window)
        prepped = []
        for label, panel in mobility_panels:
            if cfg.baseline_window is not None:
                panel = baseline_panel(panel, cfg.baseline_window)
            prepped.append((label, rolling_mean_panel(panel, cfg.smooth_window)))
    except PreprocessError as exc:
        return _fail("preprocess", exc, EXIT_CONFIG)
    except PanelError as exc:
        return _fail("preprocess", exc, EXIT_INPUT)

    grid = grid_for_estimator(cfg.estimator, cfg.lambdas)
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail("emit", exc, EXIT_RUNTIME)
    summaries: dict[str, dict] = {}
    for label, panel in prepped:
        try:
            cases_f = filter_complete(cases_smooth, study)
            mob_f = filter_complete(panel, study)
            cases_al, mob_al = align([cases_f, mob_f])
        except PanelError as exc:
            return _fail(f"align[{label}]", exc, EXIT_INPUT)
        try:
            records = run_backtest(cases_al, mob_al, cfg.window_spec, grid,
                                   cfg.val_len, cfg.jobs)
            summaries[label] = _emit_dataset(label, records, cfg.output_dir)
        except (BacktestError, MetricsError, ElasticNetError, OSError) as exc:
            return _fail(f"backtest[{label}]", exc, EXIT_RUNTIME)

    try:
        _atomic_write_text(cfg.output_dir / "summary.json",
                           _summary_json(cfg, study, summaries))
    except OSError as exc:
        return _fail("emit", exc, EXIT_RUNTIME)
    print(f"wrote {len(summaries)} dataset(s) to {cfg.output_dir}")
    return EXIT_OK


def cmd_validate(case_csv: Path, mobility_csvs: list[tuple[str, Path]],
                 cases_schema: str = "long") -> int:
    try:
        cases = load_panel_csv(case_csv, SCHEMAS[cases_schema])
        mobility = [(label, load_panel_csv(path, LONG_SCHEMA, name=label))
                    for label, path in mobility_csvs]
    except PanelError as exc:
        return _fail("load", exc, EXIT_INPUT)

    def describe(name: str, panel: Panel) -> None:
        complete = sum(1 for s in panel.series.values() if s.is_complete)
        print(f"{name}: {panel.n_counties} counties ({complete} complete) on "
              f"{panel.index.start.isoformat()}..{panel.index.end.isoformat()}")

    describe(f"cases [{cases.name}]", cases)
    for label, panel in mobility:
        describe(label, panel)
        common = cases.index.intersect(panel.index)
        if common is None:
            print(f"  WARNING: {label} shares no dates with the case data")
            continue
        try:
            usable = align([filter_complete(cases, common), filter_complete(panel, common)])
            n = usable[0].n_counties
        except PanelError:
            n = 0
        flag = "  WARNING: empty intersection" if n == 0 else ""
        print(f"  usable with cases: {n} counties on "
              f"{common.start.isoformat()}..{common.end.isoformat()}{flag}")
    return EXIT_OK


def _parse_coupling(raw: str) -> tuple[tuple[int, int, float], ...]:
    """START:END:GAMMA[,START:END:GAMMA ...] with END exclusive."""
    phases = []
    for chunk in raw.split(","):
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(f"coupling: expected START:END:GAMMA, got {chunk!r}")
        try:
            phases.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ConfigError(f"coupling: bad phase {chunk!r}") from exc
    return tuple(phases)


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        cfg = SynthConfig(
            n_counties=args.counties,
            n_days=args.days,
            seed=args.seed,
            ar_coeff=args.ar,
            coupling=_parse_coupling(args.coupling),
            mobility_lag=args.coupling_lag,
            noise_sd=args.noise_sd,
            start_date=_parse_date(args.start_date, "start-date"),
            level_spread=args.level_spread,
            walk_sd=args.walk_sd,
        )
    except (SynthError, ConfigError) as exc:
        return _fail("config", exc, EXIT_CONFIG)

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        cases, mobility = generate(cfg)
        for panel, fname in ((cases, "cases.csv"), (mobility, "mobility.csv")):
            tmp = out / (fname + ".tmp")
            write_panel_csv(panel, tmp)
            os.replace(tmp, out / fname)
        meta = {
            "rng": RNG_IDENTITY,
            "version": __version__,
            "n_counties": cfg.n_counties,
            "n_days": cfg.n_days,
            "seed": cfg.seed,
            "ar_coeff": cfg.ar_coeff,
            "coupling": [list(p) for p in cfg.coupling],
            "mobility_lag": cfg.mobility_lag,
            "noise_sd": cfg.noise_sd,
            "start_date": cfg.start_date.isoformat(),
            "level_spread": cfg.level_spread,
            "walk_sd": cfg.walk_sd,
            "walk_smooth": cfg.walk_smooth,
        }
        _atomic_write_text(out / "synth_meta.json",
                           json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        return _fail("emit", exc, EXIT_RUNTIME)
    print(f"wrote cases.csv, mobility.csv, synth_meta.json to {out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        records = records_from_csv(Path(args.predictions))
    except (OSError, BacktestError, ValueError) as exc:
        return _fail("load", exc, EXIT_INPUT)
    if not records:
        return _fail("load", "predictions file has no records", EXIT_INPUT)
    labels = {r.dataset or "dataset" for r in records}
    if len(labels) > 1:
        return _fail("load", f"predictions mix datasets {sorted(labels)}", EXIT_INPUT)
    label = labels.pop()
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        points = ci_series(records)
        _atomic_write_text(out / f"ci_{label}.csv", _ci_csv_text(points))
        _atomic_write_text(out / f"ci_{label}.svg",
                           ci_chart_svg(points, f"correlation improvement: {label}"))
        summary = {label: {str(l): entry for l, entry in summarize(points).items()}}
        _atomic_write_text(out / "summary.json",
                           json.dumps({"datasets": summary}, indent=2, sort_keys=True) + "\n")
    except (MetricsError, OSError, ValueError) as exc:
        return _fail("report", exc, EXIT_RUNTIME)
    print(f"wrote ci_{label}.csv, ci_{label}.svg, summary.json to {out}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mobibench",
        description="Backtest whether an exogenous mobility panel improves "
                    "short-horizon county case forecasts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="report county counts and date coverage")
    p_val.add_argument("--cases", required=True)
    p_val.add_argument("--cases-schema", choices=sorted(SCHEMAS), default="long")
    p_val.add_argument("--mobility", action="append", default=[],
                       metavar="LABEL=PATH")

    p_syn = sub.add_parser("synth", help="write seeded synthetic case/mobility panels")
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--counties", type=int, default=200)
    p_syn.add_argument("--days", type=int, default=256)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--ar", type=float, default=0.8)
    p_syn.add_argument("--coupling", default="0:150:0.5", metavar="START:END:GAMMA[,...]")
    p_syn.add_argument("--coupling-lag", type=int, default=10,
                       help="lag at which mobility drives cases (off-lag mode: 5)")
    p_syn.add_argument("--noise-sd", type=float, default=SynthConfig.noise_sd)
    p_syn.add_argument("--start-date", default="2020-02-17")
    p_syn.add_argument("--level-spread", type=float, default=SynthConfig.level_spread)
    p_syn.add_argument("--walk-sd", type=float, default=SynthConfig.walk_sd)

    p_back = sub.add_parser("backtest", help="run the full pipeline and emit reports")
    p_back.add_argument("--config", help="flat key=value config file; flags win")
    p_back.add_argument("--cases")
    p_back.add_argument("--cases-schema", choices=sorted(SCHEMAS))
    p_back.add_argument("--mobility", action="append", metavar="LABEL=PATH")
    p_back.add_argument("--out")
    p_back.add_argument("--start-date")
    p_back.add_argument("--end-date")
    p_back.add_argument("--baseline-window", metavar="START:END|none",
                        help=f"default {DEFAULT_BASELINE_WINDOW}")
    p_back.add_argument("--train-len", type=int)
    p_back.add_argument("--lookaheads", metavar="N,N,...")
    p_back.add_argument("--mobility-lag", type=int)
    p_back.add_argument("--stride", type=int)
    p_back.add_argument("--estimator", choices=["elasticnet", "ols", "ridge", "lasso"])
    p_back.add_argument("--lambdas", metavar="F,F,...")
    p_back.add_argument("--val-len", type=int)
    p_back.add_argument("--smooth-window", type=int)
    p_back.add_argument("--jobs", type=int)

    p_rep = sub.add_parser("report", help="re-derive ci/summary/SVG from a predictions CSV")
    p_rep.add_argument("--predictions", required=True)
    p_rep.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags; map to config error
        code = exc.code or 0
        return EXIT_CONFIG if code == 2 else int(code)

    if args.command == "validate":
        try:
            mobility = [_parse_mobility_entry(m) for m in args.mobility]
        except ConfigError as exc:
            return _fail("config", exc, EXIT_CONFIG)
        return cmd_validate(Path(args.cases), mobility, args.cases_schema)
    if args.command == "synth":
        return cmd_synth(args)
    if args.command == "backtest":
        try:
            cfg = build_run_config(args)
        except ConfigError as exc:
            return _fail("config", exc, EXIT_CONFIG)
        return cmd_backtest(cfg)
    if args.command == "report":
        return cmd_report(args)
    return _fail("config", f"unknown command {args.command!r}", EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
