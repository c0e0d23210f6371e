"""Cross-county Spearman correlation and per-day correlation improvement.

For every (date, lookahead) group of backtest records the improvement is

    ci = spearman(mobility predictions, actuals)
       - spearman(baseline predictions, actuals)

computed across counties, so ci lies in [-2, 2]: positive when the
exogenous signal helps rank counties by outcome, negative when it hurts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np

from .backtest import KIND_BASELINE, KIND_MOBILITY, PredictionRecord

log = logging.getLogger(__name__)

#: Groups with fewer counties than this are skipped (a rank correlation of
#: a single pair is meaningless).
MIN_GROUP_SIZE = 2


class MetricsError(ValueError):
    """Malformed record set or invalid metric input."""


def average_ranks(values: np.ndarray | Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise MetricsError("ranks are defined for 1-d vectors")
    _, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    # For the g-th smallest distinct value the occupied rank positions are
    # cum[g]-counts[g]+1 .. cum[g]; their mean is cum[g] - (counts[g]-1)/2.
    cum = np.cumsum(counts)
    group_rank = cum - (counts - 1) / 2.0
    return group_rank[inverse]


def spearman_flagged(xs: np.ndarray | Sequence[float],
                     ys: np.ndarray | Sequence[float]) -> tuple[float, bool]:
    """Spearman rho plus a degeneracy flag.

    Rho is the Pearson correlation of the average-rank transforms. When
    either vector is constant its ranks have zero variance and the
    correlation is undefined; that case reports (0.0, True) so one flat
    prediction vector cannot abort a whole day of the pipeline.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise MetricsError(f"need equal-length 1-d vectors, got {xs.shape} / {ys.shape}")
    if len(xs) < 2:
        raise MetricsError(f"need at least 2 observations, got {len(xs)}")
    if not np.isfinite(xs).all() or not np.isfinite(ys).all():
        raise MetricsError("non-finite entries in correlation input")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        return 0.0, True
    rho = float(dx @ dy) / np.sqrt(vx * vy)
    return float(np.clip(rho, -1.0, 1.0)), False


def spearman(xs: np.ndarray | Sequence[float], ys: np.ndarray | Sequence[float]) -> float:
    """Spearman rank correlation; 0.0 for a zero-variance (flat) input."""
    rho, _ = spearman_flagged(xs, ys)
    return rho


@dataclass(frozen=True)
class CiPoint:
    """Correlation improvement of one (date, lookahead) county cross-section."""

    date: date
    lookahead: int
    rho_mobility: float
    rho_baseline: float
    ci: float
    n_counties: int


def ci_series(records: Iterable[PredictionRecord]) -> list[CiPoint]:
    """Per-(date, lookahead) correlation improvement over a record set.

    Records must come from one dataset run and contain, for every group,
    baseline and mobility predictions over the same county set. Groups
    smaller than MIN_GROUP_SIZE are skipped with a warning.
    """
    datasets = set()
    groups: dict[tuple[date, int], dict[str, dict[str, tuple[float, float]]]] = {}
    for rec in records:
        datasets.add(rec.dataset)
        by_kind = groups.setdefault((rec.date, rec.lookahead), {KIND_BASELINE: {}, KIND_MOBILITY: {}})
        if rec.model_kind not in by_kind:
            raise MetricsError(f"unknown model kind {rec.model_kind!r}")
        by_kind[rec.model_kind][rec.county] = (rec.predicted, rec.actual)
    if len(datasets) > 1:
        raise MetricsError(f"records mix datasets {sorted(map(str, datasets))}")

    points = []
    for (day, lookahead), by_kind in sorted(groups.items()):
        base = by_kind[KIND_BASELINE]
        mob = by_kind[KIND_MOBILITY]
        if set(base) != set(mob):
            raise MetricsError(
                f"county-set mismatch between model kinds for ({day.isoformat()}, "
                f"lookahead {lookahead}): {len(base)} baseline vs {len(mob)} mobility"
            )
        if len(base) < MIN_GROUP_SIZE:
            log.warning(
                "skipping (%s, lookahead %d): only %d county", day.isoformat(), lookahead, len(base)
            )
            continue
        counties = sorted(base)
        pred_b = np.array([base[c][0] for c in counties])
        pred_m = np.array([mob[c][0] for c in counties])
        actual = np.array([base[c][1] for c in counties])
        actual_m = np.array([mob[c][1] for c in counties])
        if not np.array_equal(actual, actual_m):
            raise MetricsError(
                f"baseline and mobility records disagree on actuals for "
                f"({day.isoformat()}, lookahead {lookahead})"
            )
        rho_b, flat_b = spearman_flagged(pred_b, actual)
        rho_m, flat_m = spearman_flagged(pred_m, actual)
        if flat_b or flat_m:
            log.warning(
                "degenerate prediction vector for (%s, lookahead %d); rho set to 0",
                day.isoformat(), lookahead,
            )
        points.append(CiPoint(
            date=day,
            lookahead=lookahead,
            rho_mobility=rho_m,
            rho_baseline=rho_b,
            ci=rho_m - rho_b,
            n_counties=len(counties),
        ))
    return points


def _spans(points: list[CiPoint], positive: bool) -> list[dict]:
    """Maximal runs of date-consecutive points with ci strictly >0 (or <0)."""
    spans = []
    run: list[CiPoint] = []
    for pt in points:
        hit = pt.ci > 0 if positive else pt.ci < 0
        adjacent = bool(run) and pt.date == run[-1].date + timedelta(days=1)
        if hit and (not run or adjacent):
            run.append(pt)
        else:
            if run:
                spans.append(run)
            run = [pt] if hit else []
    if run:
        spans.append(run)
    return [
        {"start": r[0].date.isoformat(), "end": r[-1].date.isoformat(), "days": len(r)}
        for r in spans
    ]


def summarize(points: Sequence[CiPoint]) -> dict[int, dict]:
    """Per-lookahead extrema and sign spans of a ci series.

    Returns {lookahead: {"max_ci", "min_ci", "mean_ci", "n_days",
    "positive_spans", "negative_spans"}} with spans as maximal runs of
    consecutive dates keeping a strict sign.
    """
    if not points:
        raise MetricsError("cannot summarize an empty ci series")
    out: dict[int, dict] = {}
    for lookahead in sorted({p.lookahead for p in points}):
        pts = sorted((p for p in points if p.lookahead == lookahead), key=lambda p: p.date)
        cis = np.array([p.ci for p in pts])
        out[lookahead] = {
            "max_ci": float(cis.max()),
            "min_ci": float(cis.min()),
            "mean_ci": float(cis.mean()),
            "n_days": len(pts),
            "positive_spans": _spans(pts, positive=True),
            "negative_spans": _spans(pts, positive=False),
        }
    return out
