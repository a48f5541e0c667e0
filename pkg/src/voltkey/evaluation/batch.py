"""Repeated pairing sessions over one deployment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..protocol.session import PairingReport, SessionParams, pair
from .metrics import pairing_success_rate
from .scenario import Deployment, PairSources, derive_seed

__all__ = ["BatchResult", "run_pairings"]


@dataclass
class BatchResult:
    reports: list[PairingReport]

    @property
    def success_rate(self) -> float:
        return pairing_success_rate(self.reports)

    @property
    def mean_agreement(self) -> float:
        """Mean pre-reconciliation agreement over every attempt of every session."""
        return float(np.mean([a for r in self.reports for a in r.attempt_agreements]))

    @property
    def mean_attempts(self) -> float:
        return float(np.mean([r.attempts_used for r in self.reports]))


def run_pairings(
    deployment: Deployment, params: SessionParams, trials: int, seed: int = 0
) -> BatchResult:
    """``trials`` independent sessions; trial ``i`` draws everything from ``(seed, i)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    reports = []
    for i in range(trials):
        src = PairSources(deployment, params, derive_seed(seed, i, 0xBA7))
        rep_a, _ = pair(src.source_a, src.source_b, params)
        reports.append(rep_a)
    return BatchResult(reports)
