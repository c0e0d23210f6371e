"""Sliding-window backtest: per-county fits and one-day-ahead predictions.

Every window trains one model per (county, lookahead, kind) on its own
supervised set and predicts the single day train_end + lookahead, so with
stride 1 each (prediction day, lookahead) pair is produced by exactly one
window. Kinds: "baseline" uses only the case value lagged by the
lookahead; "mobility" adds one exogenous value at a fixed lag.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from . import elasticnet
from .elasticnet import DEFAULT_GRID, DEFAULT_VAL_LEN, FitConfig
from .panel import CountySeries, Panel

KIND_BASELINE = "baseline"
KIND_MOBILITY = "mobility"

CSV_HEADER = ["dataset", "date", "lookahead", "fips", "model_kind", "predicted", "actual"]


class BacktestError(ValueError):
    """Invalid backtest configuration or a violated engine contract."""


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window protocol parameters.

    ``mobility_lag`` must be >= 1: a lag of 0 would let the mobility model
    read the exogenous value of the very day it predicts.
    """

    train_len: int = 60
    lookaheads: tuple[int, ...] = (1, 7, 14, 21, 28)
    mobility_lag: int = 10
    stride: int = 1

    def __post_init__(self) -> None:
        if self.train_len < 2:
            raise BacktestError(f"train_len must be >= 2, got {self.train_len}")
        las = tuple(sorted(set(int(l) for l in self.lookaheads)))
        if not las or las[0] < 1:
            raise BacktestError(f"lookaheads must be non-empty and >= 1, got {self.lookaheads}")
        object.__setattr__(self, "lookaheads", las)
        if self.mobility_lag < 1:
            raise BacktestError(f"mobility_lag must be >= 1, got {self.mobility_lag}")
        if self.stride < 1:
            raise BacktestError(f"stride must be >= 1, got {self.stride}")

    @property
    def max_lookahead(self) -> int:
        return self.lookaheads[-1]


@dataclass(frozen=True)
class Window:
    """One train placement; day indices are offsets into the panel index."""

    train_start: int
    train_end: int

    def prediction_day(self, lookahead: int) -> int:
        return self.train_end + lookahead


def enumerate_windows(index_len: int, spec: WindowSpec) -> list[Window]:
    """All window placements whose prediction days fit inside the index.

    Starts advance by ``stride`` from offset 0, giving
    floor((index_len - train_len - max_lookahead) / stride) + 1 windows.

    With the default 60-day training and 28-day horizon, a 256-day index
    yields exactly 169 stride-1 windows, not 170: a count of 170 would
    need a 257-day index (or an off-by-one counting convention), so the
    engine derives the count strictly from ``index_len`` and leaves any
    external tally to the caller to reconcile.

    >>> len(enumerate_windows(256, WindowSpec()))
    169
    >>> 256 - 60 - 28 + 1
    169
    >>> len(enumerate_windows(88, WindowSpec()))
    1
    """
    span = spec.train_len + spec.max_lookahead
    if index_len < span:
        raise BacktestError(
            f"series too short: {index_len} days cannot host {spec.train_len} train days "
            f"plus lookahead {spec.max_lookahead}"
        )
    n = (index_len - span) // spec.stride + 1
    return [
        Window(train_start=i * spec.stride, train_end=i * spec.stride + spec.train_len - 1)
        for i in range(n)
    ]


@dataclass(frozen=True)
class SupervisedSet:
    """Per-county regression rows for one (window, lookahead, kind).

    ``feature_days[r, j]`` is the day offset feature j of row r was read
    from; the design matrix is built by indexing the series at exactly
    those days, so audits of the day arithmetic see what the fit saw.
    """

    target_days: np.ndarray
    y: np.ndarray
    X: np.ndarray
    feature_days: np.ndarray
    has_mobility: bool

    @property
    def n_rows(self) -> int:
        return len(self.y)


def build_supervised(cases: CountySeries, mobility: CountySeries | None,
                     window: Window, lookahead: int, mobility_lag: int) -> SupervisedSet:
    """Training rows for days t in the window with all lagged features available.

    Rows whose case lag (t - lookahead) or mobility lag (t - mobility_lag)
    would fall before day 0, or would read a missing (NaN) cell, are
    dropped rather than imputed. Fewer than 2 usable rows is an error.
    """
    n_days = len(cases.values)
    if not (0 <= window.train_start <= window.train_end < n_days):
        raise BacktestError(
            f"window [{window.train_start}, {window.train_end}] invalid for "
            f"{n_days}-day series"
        )
    if lookahead < 1:
        raise BacktestError(f"lookahead must be >= 1, got {lookahead}")
    min_feature_lag = max(lookahead, mobility_lag) if mobility is not None else lookahead
    t0 = max(window.train_start, min_feature_lag)
    t = np.arange(t0, window.train_end + 1)
    y = cases.values[t]
    if mobility is not None:
        feature_days = np.column_stack((t - lookahead, t - mobility_lag))
        X = np.column_stack((cases.values[t - lookahead], mobility.values[t - mobility_lag]))
    else:
        feature_days = (t - lookahead).reshape(-1, 1)
        X = cases.values[t - lookahead].reshape(-1, 1)
    usable = np.isfinite(y) & np.isfinite(X).all(axis=1)
    if not usable.all():
        t, y, X, feature_days = t[usable], y[usable], X[usable], feature_days[usable]
    if len(y) < 2:
        raise BacktestError(
            f"window [{window.train_start}, {window.train_end}], lookahead {lookahead}: "
            f"only {len(y)} usable training rows"
        )
    return SupervisedSet(target_days=t, y=y, X=np.ascontiguousarray(X),
                         feature_days=feature_days, has_mobility=mobility is not None)


def prediction_features(window: Window, lookahead: int, mobility_lag: int,
                        with_mobility: bool) -> tuple[int, np.ndarray]:
    """Day offsets feeding the single out-of-window prediction.

    Returns (prediction day, feature days): cases at day - lookahead,
    plus the exogenous value at day - mobility_lag for mobility models.
    """
    pred_day = window.prediction_day(lookahead)
    if with_mobility:
        return pred_day, np.array([pred_day - lookahead, pred_day - mobility_lag])
    return pred_day, np.array([pred_day - lookahead])


@dataclass(frozen=True)
class PredictionRecord:
    """One backtest output atom; dataset is None only for baseline-only runs."""

    date: date
    county: str
    lookahead: int
    model_kind: str
    dataset: str | None
    predicted: float
    actual: float


def sort_records(records: Iterable[PredictionRecord]) -> list[PredictionRecord]:
    """Canonical order: dataset, date, lookahead, county, kind."""
    return sorted(
        records,
        key=lambda r: (r.dataset or "", r.date, r.lookahead, r.county, r.model_kind),
    )


def _select_config(X: np.ndarray, y: np.ndarray, grid: Sequence[FitConfig],
                   val_len: int) -> FitConfig:
    """Grid selection with the validation tail shrunk to what the rows allow.

    With the default 60-day windows the tail is never shrunk; for extreme
    custom configs where no chronological split is possible the most
    regularized config wins (deterministic, conservative).
    """
    if len(grid) == 1:
        return grid[0]
    val_eff = min(val_len, len(y) - 2)
    if val_eff < 1:
        return max(grid, key=lambda c: (c.lam, c.alpha))
    return elasticnet.select_hyperparams(X, y, grid, val_eff)


def _records_for_county(county: str, cases: Panel, mobility: Panel | None,
                        spec: WindowSpec, grid: Sequence[FitConfig],
                        val_len: int, windows: list[Window],
                        dataset: str | None) -> list[PredictionRecord]:
    case_series = cases.series[county]
    mob_series = mobility.series[county] if mobility is not None else None
    kinds = [KIND_BASELINE] + ([KIND_MOBILITY] if mobility is not None else [])
    records = []
    for window in windows:
        for lookahead in spec.lookaheads:
            for kind in kinds:
                with_mob = kind == KIND_MOBILITY
                try:
                    sup = build_supervised(
                        case_series, mob_series if with_mob else None,
                        window, lookahead, spec.mobility_lag,
                    )
                    cfg = _select_config(sup.X, sup.y, grid, val_len)
                    model = elasticnet.fit(sup.X, sup.y, cfg)
                except (BacktestError, elasticnet.ElasticNetError) as exc:
                    raise BacktestError(
                        f"county {county}, window [{window.train_start}, "
                        f"{window.train_end}], lookahead {lookahead}, {kind}: {exc}"
                    ) from exc
                pred_day, feat_days = prediction_features(
                    window, lookahead, spec.mobility_lag, with_mob
                )
                if feat_days.min() < 0:
                    raise BacktestError(
                        f"county {county}, lookahead {lookahead}, {kind}: prediction "
                        f"feature day {feat_days.min()} precedes the data start"
                    )
                if feat_days.max() > pred_day - 1:
                    raise BacktestError("internal error: feature day reaches prediction day")
                if with_mob:
                    x_row = np.array([case_series.values[feat_days[0]],
                                      mob_series.values[feat_days[1]]])
                else:
                    x_row = np.array([case_series.values[feat_days[0]]])
                predicted = float(model.intercept + x_row @ model.coefficients)
                records.append(PredictionRecord(
                    date=cases.index.day(pred_day),
                    county=county,
                    lookahead=lookahead,
                    model_kind=kind,
                    dataset=dataset,
                    predicted=predicted,
                    actual=float(case_series.values[pred_day]),
                ))
    return records


_POOL_ARGS: tuple | None = None


def _pool_init(args: tuple) -> None:
    global _POOL_ARGS
    _POOL_ARGS = args


def _pool_task(county: str) -> list[PredictionRecord]:
    return _records_for_county(county, *_POOL_ARGS)


def run_backtest(cases: Panel, mobility: Panel | None, spec: WindowSpec,
                 grid: Sequence[FitConfig] = DEFAULT_GRID,
                 val_len: int = DEFAULT_VAL_LEN, jobs: int = 1) -> list[PredictionRecord]:
    """Fit and predict every (county, window, lookahead, kind) combination.

    Panels must be aligned (same index, same counties) and complete.
    Counties are independent, so ``jobs`` > 1 fans them out over processes;
    the output is canonically sorted and byte-identical for any job count.
    """
    if mobility is not None:
        if mobility.index != cases.index:
            raise BacktestError(
                f"panels not aligned: case index {cases.index} vs mobility {mobility.index}"
            )
        if mobility.counties != cases.counties:
            raise BacktestError(
                f"panels not aligned: {cases.n_counties} case counties vs "
                f"{mobility.n_counties} mobility counties"
            )
        if not mobility.is_complete():
            raise BacktestError(f"mobility panel {mobility.name!r} has missing values")
    if not cases.is_complete():
        raise BacktestError(f"case panel {cases.name!r} has missing values")
    if not grid:
        raise BacktestError("hyperparameter grid is empty")

    windows = enumerate_windows(cases.index.length, spec)
    dataset = mobility.name if mobility is not None else None
    args = (cases, mobility, spec, tuple(grid), val_len, windows, dataset)

    if jobs <= 1 or cases.n_counties == 1:
        per_county = [_records_for_county(c, *args) for c in cases.counties]
    else:
        with multiprocessing.Pool(processes=jobs, initializer=_pool_init,
                                  initargs=(args,)) as pool:
            per_county = pool.map(_pool_task, cases.counties)
    return sort_records(r for county in per_county for r in county)


def audit_day_usage(index_len: int, spec: WindowSpec,
                    with_mobility: bool) -> dict[tuple[int, int, str], int]:
    """Largest day offset each (prediction day, lookahead, kind) fit reads.

    Replays the window/feature-day construction (no fitting; the day
    arithmetic is all that matters for leakage) and returns
    {(prediction day, lookahead, kind): max day offset used} covering both
    the training rows and the prediction row.
    """
    usage: dict[tuple[int, int, str], int] = {}
    kinds = [KIND_BASELINE] + ([KIND_MOBILITY] if with_mobility else [])
    for window in enumerate_windows(index_len, spec):
        for lookahead in spec.lookaheads:
            for kind in kinds:
                mob = kind == KIND_MOBILITY
                min_feature_lag = max(lookahead, spec.mobility_lag) if mob else lookahead
                t0 = max(window.train_start, min_feature_lag)
                train_max = window.train_end  # targets; features lag behind them
                pred_day, feat_days = prediction_features(
                    window, lookahead, spec.mobility_lag, mob
                )
                if t0 > window.train_end:
                    raise BacktestError("window has no usable training rows")
                usage[(pred_day, lookahead, kind)] = max(train_max, int(feat_days.max()))
    return usage


def records_to_csv(records: Sequence[PredictionRecord], target: str | Path | IO[str]) -> None:
    """Write records as dataset,date,lookahead,fips,model_kind,predicted,actual.

    Floats use repr (shortest round-trip), keeping reruns byte-identical.
    """
    own = isinstance(target, (str, Path))
    fh = open(target, "w", newline="", encoding="utf-8") if own else target
    try:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([
                r.dataset or "", r.date.isoformat(), r.lookahead, r.county,
                r.model_kind, repr(r.predicted), repr(r.actual),
            ])
    finally:
        if own:
            fh.close()


def records_from_csv(path: str | Path) -> list[PredictionRecord]:
    """Read back a predictions CSV written by :func:`records_to_csv`."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise BacktestError(f"{path}: missing columns {missing}")
        for row in reader:
            records.append(PredictionRecord(
                date=date.fromisoformat(row["date"]),
                county=row["fips"],
                lookahead=int(row["lookahead"]),
                model_kind=row["model_kind"],
                dataset=row["dataset"] or None,
                predicted=float(row["predicted"]),
                actual=float(row["actual"]),
            ))
    return records
