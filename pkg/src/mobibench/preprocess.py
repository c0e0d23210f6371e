"""Series transforms: reference-window baselining, rolling means, lagging.

All transforms are pure and per-county; none of them ever fills a missing
value. A NaN input cell yields NaN wherever it participates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date

import numpy as np

from .panel import CountySeries, DateIndex, Panel, PanelError

log = logging.getLogger(__name__)


class PreprocessError(ValueError):
    """Violated transform precondition."""


#: A baseline mean closer to zero than this is treated as degenerate.
ZERO_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class BaselineWindow:
    """Inclusive reference period whose mean defines the baseline level."""

    start: date
    end: date

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise PreprocessError(f"baseline window end {self.end} precedes start {self.start}")

    @property
    def length(self) -> int:
        return (self.end - self.start).days + 1

    def to_index(self) -> DateIndex:
        return DateIndex.from_range(self.start, self.end)


def baseline_normalize(series: CountySeries, baseline_mean: float) -> CountySeries:
    """Divide every value by the county's reference-period mean."""
    if not np.isfinite(baseline_mean) or abs(baseline_mean) <= ZERO_MEAN_TOL:
        raise PreprocessError(
            f"county {series.county}: degenerate baseline mean {baseline_mean!r}"
        )
    return CountySeries(series.county, series.values / baseline_mean)


def rolling_mean(series: CountySeries, window: int = 7) -> CountySeries:
    """Trailing mean over ``window`` days; the head uses the available prefix.

    Day t becomes mean(values[max(0, t-window+1) .. t]). A window containing
    any NaN yields NaN (missing data is never averaged around).
    """
    if window < 1:
        raise PreprocessError(f"window must be >= 1, got {window}")
    v = series.values
    n = len(v)
    nan_mask = np.isnan(v)
    sums = np.concatenate(([0.0], np.cumsum(np.where(nan_mask, 0.0, v))))
    bad = np.concatenate(([0], np.cumsum(nan_mask)))
    t = np.arange(n)
    starts = np.maximum(0, t - window + 1)
    widths = t + 1 - starts
    out = (sums[t + 1] - sums[starts]) / widths
    out[(bad[t + 1] - bad[starts]) > 0] = np.nan
    return CountySeries(series.county, out)


def lag(series: CountySeries, k: int) -> CountySeries:
    """Shift values forward by ``k`` days; the first k days become NaN (no value)."""
    n = len(series.values)
    if k < 0:
        raise PreprocessError(f"lag must be >= 0, got {k}")
    if k >= n:
        raise PreprocessError(f"lag {k} >= series length {n}")
    out = np.full(n, np.nan)
    if k == 0:
        out[:] = series.values
    else:
        out[k:] = series.values[:-k]
    return CountySeries(series.county, out)


def baseline_means(panel: Panel, window: BaselineWindow) -> dict[str, float]:
    """Per-county mean of raw values over the baseline window.

    Counties with any missing day inside the window get no entry (they
    cannot be baselined without imputing).
    """
    idx = window.to_index()
    if not panel.index.contains(idx):
        raise PreprocessError(
            f"baseline window {window.start}..{window.end} outside panel "
            f"{panel.name!r} range {panel.index.start}..{panel.index.end}"
        )
    lo = (window.start - panel.index.start).days
    hi = lo + idx.length
    means: dict[str, float] = {}
    for county, s in panel.series.items():
        chunk = s.values[lo:hi]
        if not np.isnan(chunk).any():
            means[county] = float(chunk.mean())
    return means


def baseline_panel(panel: Panel, window: BaselineWindow) -> Panel:
    """Baseline every county of a panel against its own reference-window mean.

    Counties lacking complete coverage of the window are dropped (logged);
    a county whose window mean is ~0 is an error, since dividing by it
    would be meaningless rather than merely missing.
    """
    means = baseline_means(panel, window)
    dropped = [c for c in panel.counties if c not in means]
    if dropped:
        log.info(
            "panel %r: dropped %d/%d counties with incomplete baseline window",
            panel.name, len(dropped), panel.n_counties,
        )
    if not means:
        raise PanelError(
            f"panel {panel.name!r}: no county has complete data on the baseline window"
        )
    series = {
        county: baseline_normalize(panel.series[county], mean)
        for county, mean in means.items()
    }
    return Panel(name=panel.name, index=panel.index, series=series)


def rolling_mean_panel(panel: Panel, window: int = 7) -> Panel:
    """Apply :func:`rolling_mean` to every county."""
    series = {c: rolling_mean(s, window) for c, s in panel.series.items()}
    return Panel(name=panel.name, index=panel.index, series=series)
