"""Adversaries outside the victim's electrical domain.

Victim sessions are laid out on a calendar: ``slots_per_day`` consecutive
capture windows per simulated day, each window its own pairing session. Replay
adversaries (near-time, daily-pattern) hold a key from an earlier window and
push it through the current helper data. Measuring adversaries
(dominant-noise, passive) capture their own domain during the victim's window
and run the responder side against the public transcript.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import alignment, bitext, recon
from ..bitext import BitSequence, IndexSchedule, Role
from ..protocol.session import SessionParams, TranscriptEntry, pair
from ..protocol.wire import Helper, Indices, Init, Preamble, Rate, decode_message
from ..signal_sim import AdcConfig, DomainNoiseConfig, SignalTrace, observe, synth_master
from .metrics import bit_agreement_rate
from .scenario import Deployment, PairSources, capture_duration, derive_seed

__all__ = [
    "SCENARIOS",
    "AttackScenario",
    "AttackReport",
    "VictimSession",
    "run_attack",
    "passive_attack",
    "replay_attack",
    "victim_session",
]

SCENARIOS = ("near_time", "daily_pattern", "dominant_noise", "passive")
MIN_TRIALS = 100
HIST_BINS = 100


@dataclass(frozen=True)
class AttackScenario:
    kind: str
    trials: int = 1000
    victim: Deployment = field(default_factory=Deployment)
    # noise of the adversary's own domain; its load waveform is replaced per kind
    adversary_noise: DomainNoiseConfig = field(default_factory=DomainNoiseConfig)
    slots_per_day: int = 100

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown attack scenario {self.kind!r}; choose from {SCENARIOS}")
        if self.trials < MIN_TRIALS:
            raise ValueError(f"attack runs need at least {MIN_TRIALS} trials, got {self.trials}")
        if self.slots_per_day < 2:
            raise ValueError("slots_per_day must be >= 2")


@dataclass
class AttackReport:
    kind: str
    agreements: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.agreements)

    @property
    def mean(self) -> float:
        return float(np.mean(self.agreements))

    @property
    def max(self) -> float:
        return float(np.max(self.agreements))

    @property
    def any_success(self) -> bool:
        return bool(np.any(self.agreements == 1.0))

    @property
    def histogram(self) -> np.ndarray:
        """Counts in 0.01-wide bins over [0, 1]; 1.0 lands in the last bin."""
        idx = np.minimum((np.asarray(self.agreements) * HIST_BINS).astype(int), HIST_BINS - 1)
        return np.bincount(idx, minlength=HIST_BINS)

    def to_dict(self) -> dict:
        return {
            "kind": "attack",
            "scenario": self.kind,
            "trials": self.trials,
            "mean_agreement": self.mean if self.trials else None,
            "max_agreement": self.max if self.trials else None,
            "any_success": self.any_success,
            "histogram": {"bin_width": 0.01, "counts": self.histogram.tolist()},
            "agreements": [float(a) for a in self.agreements],
        }


@dataclass(frozen=True)
class VictimSession:
    """What an outsider can see of one session, plus the initiator key for scoring."""

    key: BitSequence
    transcript: tuple[TranscriptEntry, ...]
    duration: float
    master_load_seed: int


def victim_session(deployment: Deployment, params: SessionParams, seed: int) -> VictimSession:
    one_shot = replace(params, max_attempts=1)
    src = PairSources(deployment, one_shot, seed)
    rep_a, _ = pair(src.source_a, src.source_b, one_shot)
    return VictimSession(
        key=rep_a.attempts[-1].key,
        transcript=tuple(rep_a.transcript),
        duration=capture_duration(one_shot, deployment),
        master_load_seed=deployment.load_seed,
    )


_POOL: dict = {}


def _victims(scenario: AttackScenario, params: SessionParams, seed: int, count: int):
    pool = _POOL.setdefault((scenario.victim, params, seed), [])
    while len(pool) < count:
        pool.append(victim_session(scenario.victim, params, derive_seed(seed, len(pool), 0x71C)))
    return pool


def _last_attempt(transcript) -> dict:
    frames = [e.frame if isinstance(e, TranscriptEntry) else e for e in transcript]
    msgs = [decode_message(f) for f in frames]
    start = max(i for i, m in enumerate(msgs) if isinstance(m, Init))
    out: dict = {"rates": []}
    for m in msgs[start:]:
        if isinstance(m, Rate):
            out["rates"].append(m.spp)
        elif isinstance(m, Preamble):
            out["preamble"] = np.asarray(m.samples, dtype=float)
        elif isinstance(m, Indices):
            out["indices"] = np.asarray(m.entries, dtype=np.int64)
        elif isinstance(m, Helper):
            out["helper"] = np.asarray(m.bits, dtype=np.uint8)
    return out


def replay_attack(old_key: BitSequence, transcript, params: SessionParams) -> BitSequence:
    """Push a stale key through the current session's helper data."""
    code = recon.build_code(*params.code)
    helper = _last_attempt(transcript)["helper"]
    return recon.reconcile(code, old_key, recon.HelperData(helper.reshape(-1, code.n)))


def passive_attack(transcript, adversary_trace: SignalTrace, params: SessionParams) -> BitSequence:
    """Responder procedure driven by the adversary's own capture and the public transcript."""
    code = recon.build_code(*params.code)
    seen = _last_attempt(transcript)
    c_l = alignment.negotiate_rate(*seen["rates"][:2])
    own = alignment.estimate_spp(adversary_trace, params.nominal_rate, params.sweep_radius).spp
    x = alignment.resample(adversary_trace, own, c_l)
    d = alignment.sync_offset(seen["preamble"], x, params.search_periods * c_l).offset_samples
    schedule = IndexSchedule(seen["indices"].reshape(params.n_p, params.n_b), c_l)
    periods = bitext.slice_periods(x.samples, c_l, params.n_p + 2, start=d)
    raw, _ = bitext.generate_sequence(
        periods, params.n_p, params.n_b, params.key_len, Role.FOLLOWER, schedule
    )
    helper = recon.HelperData(seen["helper"].reshape(-1, code.n))
    return recon.reconcile(code, raw, helper)


def _adversary_trace(scenario, params, victim: VictimSession, seed: int, trial: int) -> SignalTrace:
    if scenario.kind == "dominant_noise":
        # same appliance waveform as the victim domain, own stochastic noise
        load_seed = victim.master_load_seed
    else:
        load_seed = derive_seed(seed, 0xADF)
    cfg = replace(
        scenario.adversary_noise,
        seed=derive_seed(seed, trial, 0xAD),
        load_seed=load_seed,
    )
    master = synth_master(cfg, victim.duration)
    rng = np.random.default_rng([seed, trial, 0xADC])
    r = scenario.victim.skew_range_ppm
    adc = AdcConfig(
        nominal_rate=float(params.nominal_rate),
        skew_ppm=float(rng.uniform(-r, r)) if r > 0 else 0.0,
        local_noise_rms=scenario.victim.local_noise_rms,
        seed=derive_seed(seed, trial, 0xADD),
    )
    return observe(master, adc, 0.0, params.capture_samples)


def run_attack(scenario: AttackScenario, params: SessionParams | None = None, seed: int = 0) -> AttackReport:
    """Score ``scenario.trials`` attempts by the adversary against fresh victim keys.

    Each trial's agreement is measured after reconciliation against the
    initiator's key. Victim sessions are cached per (deployment, params, seed)
    so different scenarios with the same seed attack the same sessions.
    """
    params = params or SessionParams()
    n = scenario.trials
    spd = scenario.slots_per_day
    agreements = np.empty(n)
    if scenario.kind == "near_time":
        per_day = spd - 1
        days = -(-n // per_day)
        pool = _victims(scenario, params, seed, days * spd)
        for t in range(n):
            cur = (t // per_day) * spd + t % per_day + 1
            guess = replay_attack(pool[cur - 1].key, pool[cur].transcript, params)
            agreements[t] = bit_agreement_rate(guess, pool[cur].key)
    elif scenario.kind == "daily_pattern":
        days = -(-n // spd) + 1
        pool = _victims(scenario, params, seed, days * spd)
        for t in range(n):
            cur = t + spd
            guess = replay_attack(pool[cur - spd].key, pool[cur].transcript, params)
            agreements[t] = bit_agreement_rate(guess, pool[cur].key)
    else:
        pool = _victims(scenario, params, seed, n)
        for t in range(n):
            victim = pool[t]
            trace = _adversary_trace(scenario, params, victim, seed, t)
            guess = passive_attack(victim.transcript, trace, params)
            agreements[t] = bit_agreement_rate(guess, victim.key)
    return AttackReport(scenario.kind, agreements)
