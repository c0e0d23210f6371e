"""Seeded synthetic case/mobility panels with controllable coupling.

The generator exists so the full pipeline is testable end to end without
any proprietary vendor data: mobility is a smooth per-county random walk,
and cases follow

    cases(t) = ar_coeff * cases(t-1) + gamma(t) * mobility(t - mobility_lag) + eps_t

with eps ~ Normal(0, noise_sd), values floored at 0 and capped so an
explosive AR coefficient cannot overflow. gamma follows a day-range
schedule, so coupling can be switched on for an early regime and off
afterwards; a run over such data should show positive correlation
improvement while coupled and roughly none after.

All randomness comes from one numpy.random.default_rng(seed) stream
(PCG64) with a fixed draw order, so equal seeds give byte-identical
panels. RNG_IDENTITY names the generator for output metadata.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .panel import CountySeries, DateIndex, Panel

RNG_IDENTITY = "numpy.random.default_rng (PCG64)"

#: Cases are clamped to [0, CASE_CAP]; the cap only matters for |ar_coeff| >= 1.
CASE_CAP = 1e9
#: Mobility floor keeps baseline-window means away from zero.
MOBILITY_FLOOR = 0.05


class SynthError(ValueError):
    """Invalid generator configuration."""


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``coupling`` maps day ranges to the coupling strength gamma as
    (start, end, gamma) phases with end exclusive; days covered by no
    phase get gamma 0, and the first matching phase wins. ``mobility_lag``
    is the lag at which mobility enters the case recursion; setting it
    away from the pipeline's assumed lag (e.g. 5 instead of 10) is the
    deliberate off-lag mode for sensitivity checks.

    A backtest over the output additionally needs
    n_days >= train_len + max(lookaheads); the generator itself does not
    know the window protocol and only requires n_days >= 2.
    """

    n_counties: int = 200
    n_days: int = 256
    seed: int = 0
    ar_coeff: float = 0.8
    coupling: tuple[tuple[int, int, float], ...] = ((0, 150, 0.5),)
    mobility_lag: int = 10
    noise_sd: float = 0.065  # puts the default coupling SNR at ~1
    start_date: date = date(2020, 2, 17)
    level_spread: float = 0.25
    walk_sd: float = 0.03
    walk_smooth: int = 7

    def __post_init__(self) -> None:
        if self.n_counties < 2:
            raise SynthError(f"n_counties must be >= 2, got {self.n_counties}")
        if self.n_days < 2:
            raise SynthError(f"n_days must be >= 2, got {self.n_days}")
        if abs(self.ar_coeff) >= 1.5:
            raise SynthError(f"|ar_coeff| must be < 1.5, got {self.ar_coeff}")
        if self.mobility_lag < 0:
            raise SynthError(f"mobility_lag must be >= 0, got {self.mobility_lag}")
        if self.noise_sd < 0:
            raise SynthError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.walk_smooth < 1 or self.walk_sd < 0 or self.level_spread < 0:
            raise SynthError("walk_smooth must be >= 1, walk_sd and level_spread >= 0")
        for start, end, _ in self.coupling:
            if not 0 <= start < end:
                raise SynthError(f"bad coupling phase [{start}, {end})")

    def gamma_at(self, t: int) -> float:
        for start, end, gamma in self.coupling:
            if start <= t < end:
                return float(gamma)
        return 0.0


def _county_ids(n: int) -> list[str]:
    return [f"{i + 1:05d}" for i in range(n)]


def generate(cfg: SynthConfig) -> tuple[Panel, Panel]:
    """Generate aligned (cases, mobility) panels for one seed.

    Draw order is fixed (mobility levels, mobility walk steps, case noise)
    so outputs are fully determined by the config.
    """
    rng = np.random.default_rng(cfg.seed)
    n, days = cfg.n_counties, cfg.n_days

    levels = 1.0 + rng.uniform(-cfg.level_spread, cfg.level_spread, size=n)
    steps = rng.normal(0.0, cfg.walk_sd, size=(n, days))
    eps = rng.normal(0.0, 1.0, size=(n, days))

    # Smooth the walk increments with a trailing box filter, then integrate.
    if cfg.walk_smooth > 1:
        kernel = np.ones(cfg.walk_smooth) / cfg.walk_smooth
        smoothed = np.apply_along_axis(lambda s: np.convolve(s, kernel)[:days], 1, steps)
    else:
        smoothed = steps
    mobility = levels[:, None] + np.cumsum(smoothed, axis=1)
    np.maximum(mobility, MOBILITY_FLOOR, out=mobility)

    gammas = np.array([cfg.gamma_at(t) for t in range(days)])
    cases = np.empty((n, days))
    # Start at the coupling equilibrium when one exists, so the coupled
    # regime is in force from day 0 rather than after a burn-in.
    if abs(cfg.ar_coeff) < 1.0:
        base = gammas[0] * mobility[:, 0] / (1.0 - cfg.ar_coeff)
    else:
        base = mobility[:, 0]
    cases[:, 0] = np.clip(base + cfg.noise_sd * eps[:, 0], 0.0, CASE_CAP)
    for t in range(1, days):
        lag_day = max(0, t - cfg.mobility_lag)
        step = (cfg.ar_coeff * cases[:, t - 1]
                + gammas[t] * mobility[:, lag_day]
                + cfg.noise_sd * eps[:, t])
        cases[:, t] = np.clip(step, 0.0, CASE_CAP)

    index = DateIndex(cfg.start_date, days)
    ids = _county_ids(n)
    case_panel = Panel(
        name="synth_cases", index=index,
        series={c: CountySeries(c, cases[i]) for i, c in enumerate(ids)},
    )
    mob_panel = Panel(
        name="synth_mobility", index=index,
        series={c: CountySeries(c, mobility[i]) for i, c in enumerate(ids)},
    )
    return case_panel, mob_panel


def coupling_snr(cfg: SynthConfig) -> float:
    """Realized signal-to-noise of the coupling term.

    Mean over counties of the per-county standard deviation (over coupled
    days) of gamma(t) * mobility(t - lag), divided by noise_sd. The
    default config is tuned to keep this near 1.
    """
    if cfg.noise_sd == 0:
        raise SynthError("snr undefined for noise_sd = 0")
    _, mob_panel = generate(cfg)
    coupled = [t for t in range(cfg.n_days) if cfg.gamma_at(t) != 0.0]
    if len(coupled) < 2:
        raise SynthError("no coupled days in schedule")
    sds = []
    for county in mob_panel.counties:
        m = mob_panel.values(county)
        term = np.array([cfg.gamma_at(t) * m[max(0, t - cfg.mobility_lag)] for t in coupled])
        sds.append(term.std())
    return float(np.mean(sds) / cfg.noise_sd)
