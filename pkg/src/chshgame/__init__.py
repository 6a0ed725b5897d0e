"""Game-theoretic CHSH laboratory: betting protocols, capital processes and
a brute-force CHSH oracle."""
from .core import (
    DEFAULT_TABLE,
    HIDDEN_VARIABLES,
    MU,
    NU,
    SETTINGS,
    ChshTable,
    HiddenVariable,
    InvalidSetting,
    SettingPair,
    conditional_odds,
    marginal_odds,
    odds,
    table_correlation,
)
from .games import ConsistencyViolation, closed_round, locality_round, run_game
from .gtp import BettingDistribution, LogCapital, capital_update, kt_bet, run_predictive_game
from .oracle import limiting_k_rate, limiting_kl, no_joint_witness, oracle_report

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TABLE", "HIDDEN_VARIABLES", "MU", "NU", "SETTINGS",
    "ChshTable", "HiddenVariable", "InvalidSetting", "SettingPair",
    "conditional_odds", "marginal_odds", "odds", "table_correlation",
    "ConsistencyViolation", "closed_round", "locality_round", "run_game",
    "BettingDistribution", "LogCapital", "capital_update", "kt_bet", "run_predictive_game",
    "limiting_k_rate", "limiting_kl", "no_joint_witness", "oracle_report",
]
