"""Dueling-bandit simulation: Sup-KLUCB, RUCB and DTS on Copeland problems."""
from .kl import KlBudget, kl_bernoulli, kl_ucb_index
from .model import (
    NormalizationSpec,
    PreferenceMatrix,
    ScoreVector,
    borda_scores,
    copeland_scores,
    generate_random_instance,
    load_matrix_csv,
    normalize_scores,
    save_matrix_csv,
    unique_winner,
    validate_preference_matrix,
)
from .pairs import PairIndexMap
from .policies import DTS, RUCB, DuelPolicy, RandomPolicy, SupKLUCB, SupKlucbConfig, make_policy
from .simulator import (
    Environment,
    ExperimentConfig,
    PolicySpec,
    RunResult,
    copeland_regret,
    run_experiment,
    run_single,
)

__version__ = "0.1.0"
