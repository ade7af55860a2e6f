"""Price scenarios, bidding strategies and backtesting."""

from ..data import PriceSeries
from .backtest import BacktestReport, backtest, write_schedule_csv, write_summary
from .clustering import DeltaClusterSet, MarketError, cluster_deltas, kmeans, merge_invalid
from .cvar import (cvar_exact, cvar_lp, cvar_lp_problem, cvar_objective, cvar_of,
                   strategy_eum_cvar)
from .scenarios import (ScenarioMatrix, build_scenarios, method_label, point_forecast,
                        quantile_forecast, scenario_levels)
from .strategies import (BidSchedule, NewsvendorConstraint, eum_bids, eum_candidates,
                         expected_profit, newsvendor_fractile, newsvendor_level, scenario_profits,
                         strategy_eum, strategy_newsvendor, strategy_perfect, strategy_trust,
                         strategy_worst_case)

__all__ = [
    "PriceSeries",
    "BacktestReport", "backtest", "write_schedule_csv", "write_summary",
    "DeltaClusterSet", "MarketError", "cluster_deltas", "kmeans", "merge_invalid",
    "cvar_exact", "cvar_lp", "cvar_lp_problem", "cvar_objective", "cvar_of", "strategy_eum_cvar",
    "ScenarioMatrix", "build_scenarios", "method_label", "point_forecast", "quantile_forecast",
    "scenario_levels",
    "BidSchedule", "NewsvendorConstraint", "eum_bids", "eum_candidates", "expected_profit",
    "newsvendor_fractile", "newsvendor_level", "scenario_profits", "strategy_eum",
    "strategy_newsvendor", "strategy_perfect", "strategy_trust", "strategy_worst_case",
]
