"""mobibench: does an exogenous mobility panel improve case forecasts?

Backtesting engine for county-level daily panels: per-county elastic-net
regressions over sliding train/test windows, scored per day as the
cross-county Spearman correlation of predictions vs. actuals, with the
improvement of a mobility-augmented model over its no-mobility baseline
reported as the headline metric.
"""

__version__ = "0.1.0"

from .backtest import (
    BacktestError, PredictionRecord, SupervisedSet, Window, WindowSpec,
    build_supervised, enumerate_windows, run_backtest,
)
from .elasticnet import (
    DEFAULT_GRID, ElasticNetError, FitConfig, FitResult, fit, predict,
    select_hyperparams,
)
from .metrics import CiPoint, MetricsError, ci_series, spearman, summarize
from .panel import (
    CountySeries, CsvSchema, DateIndex, Panel, PanelError, align,
    filter_complete, load_panel_csv, write_panel_csv,
)
from .preprocess import (
    BaselineWindow, PreprocessError, baseline_normalize, lag, rolling_mean,
)
from .synth import SynthConfig, SynthError, generate

__all__ = [
    "__version__",
    "BacktestError", "PredictionRecord", "SupervisedSet", "Window", "WindowSpec",
    "build_supervised", "enumerate_windows", "run_backtest",
    "DEFAULT_GRID", "ElasticNetError", "FitConfig", "FitResult", "fit", "predict",
    "select_hyperparams",
    "CiPoint", "MetricsError", "ci_series", "spearman", "summarize",
    "CountySeries", "CsvSchema", "DateIndex", "Panel", "PanelError", "align",
    "filter_complete", "load_panel_csv", "write_panel_csv",
    "BaselineWindow", "PreprocessError", "baseline_normalize", "lag", "rolling_mean",
    "SynthConfig", "SynthError", "generate",
]
