from porlab.explore.core import (
    ExploreOutcome,
    Metrics,
    Mode,
    StrategyConfig,
    Verdict,
    choose_next,
    explore_spor,
    explore_stateful_full,
    safe_set,
)
from porlab.explore.eager import explore_de_spor, update_back, update_curr
from porlab.explore.lazy import explore_dl_spor

ALGORITHMS = {
    "spor": explore_spor,
    "de": explore_de_spor,
    "dl": explore_dl_spor,
    "full": explore_stateful_full,
}

__all__ = [
    "ALGORITHMS",
    "ExploreOutcome",
    "Metrics",
    "Mode",
    "StrategyConfig",
    "Verdict",
    "choose_next",
    "explore_de_spor",
    "explore_dl_spor",
    "explore_spor",
    "explore_stateful_full",
    "safe_set",
    "update_back",
    "update_curr",
]
