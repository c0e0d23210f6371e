"""County-level daily panels: containers, CSV ingestion, filtering, alignment.

A panel is a named set of per-county daily series sharing one contiguous
date index. Missing days are stored as NaN until :func:`filter_complete`
drops the counties that have any; there is no imputation anywhere.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


class PanelError(ValueError):
    """Malformed panel input or a violated panel contract."""


@dataclass(frozen=True)
class DateIndex:
    """A run of exactly ``length`` consecutive calendar days starting at ``start``."""

    start: date
    length: int

    def __post_init__(self) -> None:
        if self.length < 1:
            raise PanelError(f"DateIndex length must be >= 1, got {self.length}")

    @classmethod
    def from_range(cls, start: date, end: date) -> "DateIndex":
        """Inclusive [start, end] range."""
        if end < start:
            raise PanelError(f"date range end {end} precedes start {start}")
        return cls(start, (end - start).days + 1)

    @property
    def end(self) -> date:
        """Last day covered (inclusive)."""
        return self.start + timedelta(days=self.length - 1)

    def dates(self) -> list[date]:
        return [self.start + timedelta(days=i) for i in range(self.length)]

    def day(self, offset: int) -> date:
        if not 0 <= offset < self.length:
            raise PanelError(f"day offset {offset} outside index of length {self.length}")
        return self.start + timedelta(days=offset)

    def offset_of(self, d: date) -> int:
        off = (d - self.start).days
        if not 0 <= off < self.length:
            raise PanelError(f"date {d.isoformat()} outside index {self.start}..{self.end}")
        return off

    def contains(self, other: "DateIndex") -> bool:
        return other.start >= self.start and other.end <= self.end

    def intersect(self, other: "DateIndex") -> "DateIndex | None":
        start = max(self.start, other.start)
        end = min(self.end, other.end)
        if end < start:
            return None
        return DateIndex.from_range(start, end)


@dataclass(frozen=True)
class CountySeries:
    """One county's daily values, aligned to the owning panel's DateIndex.

    NaN cells mark days with no observation. The array is copied on
    construction and frozen so series can be shared across threads.
    """

    county: str
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise PanelError(f"county {self.county}: values must be 1-d")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    @property
    def is_complete(self) -> bool:
        return self.n_missing == 0


@dataclass(frozen=True)
class Panel:
    """Named collection of county series sharing one DateIndex."""

    name: str
    index: DateIndex
    series: dict[str, CountySeries]

    def __post_init__(self) -> None:
        ordered: dict[str, CountySeries] = {}
        for county in sorted(self.series):
            s = self.series[county]
            if s.county != county:
                raise PanelError(f"series key {county!r} disagrees with county id {s.county!r}")
            if len(s) != self.index.length:
                raise PanelError(
                    f"panel {self.name!r}: county {county} has {len(s)} values, "
                    f"index length is {self.index.length}"
                )
            ordered[county] = s
        object.__setattr__(self, "series", ordered)

    @property
    def counties(self) -> list[str]:
        return list(self.series)

    @property
    def n_counties(self) -> int:
        return len(self.series)

    def values(self, county: str) -> np.ndarray:
        return self.series[county].values

    def is_complete(self) -> bool:
        return all(s.is_complete for s in self.series.values())


@dataclass(frozen=True)
class CsvSchema:
    """Column names for a long-format panel CSV."""

    date: str = "date"
    fips: str = "fips"
    value: str = "value"


#: Long format written by this package: date,fips,value.
LONG_SCHEMA = CsvSchema()
#: NYT-style case file: date,county,state,fips,cases,deaths with cases as value.
NYT_SCHEMA = CsvSchema(value="cases")


def _normalize_fips(raw: str) -> str:
    """Zero-pad county ids to the 5-digit FIPS join key; '' stays empty."""
    fips = raw.strip()
    if fips.endswith(".0"):  # float-typed export artifact
        fips = fips[:-2]
    if fips and fips.isdigit() and len(fips) < 5:
        fips = fips.zfill(5)
    return fips


def load_panel_csv(path: str | Path, schema: CsvSchema = LONG_SCHEMA,
                   name: str | None = None) -> Panel:
    """Load a long-format CSV into a Panel spanning the min..max date found.

    Days absent for a county are recorded as NaN pending
    :func:`filter_complete`. Duplicate (date, county) rows with identical
    values merge silently; conflicting values are an error. Rows with an
    empty county id or an empty value cell are skipped (counted in a debug
    log); any other non-numeric value cell is an error.
    """
    path = Path(path)
    if name is None:
        name = path.stem
    cells: dict[tuple[str, date], float] = {}
    n_skipped = 0
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise PanelError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.date, schema.fips, schema.value):
            if col not in header:
                raise PanelError(f"{path}: missing column {col!r} (header: {header})")
        for lineno, row in enumerate(reader, start=2):
            fips = _normalize_fips(row[schema.fips] or "")
            raw_value = (row[schema.value] or "").strip()
            if not fips or not raw_value:
                n_skipped += 1
                continue
            try:
                day = date.fromisoformat(row[schema.date].strip())
            except (ValueError, AttributeError) as exc:
                raise PanelError(f"{path}:{lineno}: unparseable date {row[schema.date]!r}") from exc
            try:
                value = float(raw_value)
            except ValueError as exc:
                raise PanelError(f"{path}:{lineno}: non-numeric value {raw_value!r}") from exc
            if not math.isfinite(value):
                raise PanelError(f"{path}:{lineno}: non-finite value {raw_value!r}")
            key = (fips, day)
            if key in cells and cells[key] != value:
                raise PanelError(
                    f"{path}:{lineno}: conflicting duplicate for ({day.isoformat()}, {fips}): "
                    f"{cells[key]} vs {value}"
                )
            cells[key] = value
    if not cells:
        raise PanelError(f"{path}: no usable rows")
    if n_skipped:
        log.debug("%s: skipped %d rows with empty county id or value", path, n_skipped)

    days = [d for _, d in cells]
    index = DateIndex.from_range(min(days), max(days))
    by_county: dict[str, np.ndarray] = {}
    for (fips, day), value in cells.items():
        values = by_county.get(fips)
        if values is None:
            values = np.full(index.length, np.nan)
            by_county[fips] = values
        values[(day - index.start).days] = value
    series = {fips: CountySeries(fips, vals) for fips, vals in by_county.items()}
    return Panel(name=name, index=index, series=series)


def write_panel_csv(panel: Panel, path: str | Path) -> None:
    """Write a panel as the long format accepted by :func:`load_panel_csv`.

    NaN cells are omitted (a missing day round-trips as a missing row).
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "fips", "value"])
        dates = panel.index.dates()
        for county in panel.counties:
            values = panel.values(county)
            for day, value in zip(dates, values):
                if not math.isnan(value):
                    writer.writerow([day.isoformat(), county, repr(float(value))])


def filter_complete(panel: Panel, index: DateIndex) -> Panel:
    """Restrict to ``index``, keeping only counties with no missing day on it."""
    if not panel.index.contains(index):
        raise PanelError(
            f"requested index {index.start}..{index.end} outside panel "
            f"{panel.name!r} range {panel.index.start}..{panel.index.end}"
        )
    lo = (index.start - panel.index.start).days
    hi = lo + index.length
    kept: dict[str, CountySeries] = {}
    for county, s in panel.series.items():
        window = s.values[lo:hi]
        if not np.isnan(window).any():
            kept[county] = CountySeries(county, window)
    if not kept:
        raise PanelError(
            f"panel {panel.name!r}: no county has complete data on "
            f"{index.start}..{index.end}"
        )
    return Panel(name=panel.name, index=index, series=kept)


def align(panels: Sequence[Panel]) -> list[Panel]:
    """Restrict all panels to their common DateIndex and common county set.

    Input order is preserved; aligning already-aligned panels is the identity.
    """
    if len(panels) < 2:
        raise PanelError("align needs at least two panels")
    common_index: DateIndex | None = panels[0].index
    for p in panels[1:]:
        common_index = common_index.intersect(p.index) if common_index else None
    if common_index is None:
        raise PanelError("panels have no overlapping dates")
    common_counties = set(panels[0].counties)
    for p in panels[1:]:
        common_counties &= set(p.counties)
    if not common_counties:
        names = ", ".join(repr(p.name) for p in panels)
        raise PanelError(f"panels {names} share no counties")

    out = []
    for p in panels:
        lo = (common_index.start - p.index.start).days
        hi = lo + common_index.length
        series = {
            county: CountySeries(county, p.series[county].values[lo:hi])
            for county in sorted(common_counties)
        }
        out.append(Panel(name=p.name, index=common_index, series=series))
    return out
