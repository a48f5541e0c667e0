"""Metrics, simulated deployments, attacks and randomness tests."""

from .attacks import SCENARIOS, AttackReport, AttackScenario, passive_attack, run_attack
from .batch import BatchResult, run_pairings
from .metrics import bit_agreement_rate, pairing_success_rate, uniqueness_matrix
from .randomness import randomness_suite
from .scenario import Deployment, PairSources, aligned_noise_periods, derive_seed
from .streams import key_stream

__all__ = [
    "SCENARIOS",
    "AttackReport",
    "AttackScenario",
    "passive_attack",
    "run_attack",
    "BatchResult",
    "run_pairings",
    "bit_agreement_rate",
    "pairing_success_rate",
    "uniqueness_matrix",
    "randomness_suite",
    "Deployment",
    "PairSources",
    "aligned_noise_periods",
    "derive_seed",
    "key_stream",
]
