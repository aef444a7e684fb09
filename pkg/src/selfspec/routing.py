"""When is a verifier pass worth its cost?

Estimators turn per-position draft Dists into acceptance guesses, the
expected accepted prefix turns those into a length, a score charges a cost
against it, and a policy makes the call. The UCB bandit learns the call
online from tokens-per-forward rewards instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import normalized_entropy, top1_margin

ESTIMATORS = ("random", "soft_entropy", "conf_power", "renyi2", "hard_entropy", "hard_margin")
POLICIES = ("min_span", "score_threshold", "hysteresis", "bandit")


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "soft_entropy"
    beta: float = 1.0
    gamma_conf: float = 1.0
    tau_ent: float = 0.1
    tau_margin: float = 0.1

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.kind!r}; expected one of {ESTIMATORS}")
        if self.beta <= 0 or self.gamma_conf <= 0:
            raise ValueError("beta and gamma_conf must be positive")
        if not (0 <= self.tau_ent <= 1 and 0 <= self.tau_margin <= 1):
            raise ValueError("tau_ent and tau_margin must lie in [0, 1]")


def acceptance_probs(est: EstimatorSpec, span_dists, span_confs, rng=None) -> np.ndarray:
    """Per-position acceptance guesses in [0, 1] for a drafted span."""
    confs = np.asarray(span_confs, dtype=np.float64)
    L = len(confs)
    if est.kind == "random":
        if rng is None:
            raise ValueError("the random estimator needs an rng")
        return rng.random(L)
    if est.kind == "conf_power":
        return np.clip(confs, 0.0, 1.0) ** est.gamma_conf
    dists = [np.asarray(d, dtype=np.float64) for d in span_dists]
    if est.kind == "renyi2":
        return np.array([min(float(np.dot(d, d)), 1.0) for d in dists])
    if est.kind == "hard_margin":
        return np.array([1.0 if top1_margin(d) >= est.tau_margin else 0.0 for d in dists])
    ent = np.array([normalized_entropy(d) for d in dists])
    if est.kind == "soft_entropy":
        return np.exp(-est.beta * ent)
    return (ent < est.tau_ent).astype(np.float64)


def expected_prefix(alpha) -> float:
    """Sum over k of the product of the first k acceptance guesses."""
    a = np.asarray(alpha, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.cumprod(a).sum())


@dataclass
class RoutingState:
    """Policy configuration plus the mutable state a policy carries.

    One instance belongs to one decoding run; the hysteresis bit and bandit
    statistics carry over from block to block.
    """

    policy: str = "min_span"
    tau_span: int = 1
    tau_score: float = 0.0
    tau_on: float = 1.0
    tau_off: float = -5.0
    score_mode: str = "static"
    cost: float = 0.0
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    ucb_beta: float = 1.0
    bins: tuple = (2, 2, 2)
    h_on: bool = True
    t: int = 1
    counts: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.score_mode not in ("static", "dynamic"):
            raise ValueError("score_mode must be 'static' or 'dynamic'")
        if self.tau_off > self.tau_on:
            raise ValueError("tau_off must not exceed tau_on")
        if self.cost < 0 or self.ucb_beta < 0:
            raise ValueError("cost and ucb_beta must be >= 0")
        self.bins = tuple(int(b) for b in self.bins)
        if len(self.bins) != 3 or min(self.bins) < 1:
            raise ValueError("bins must be three positive integers")

    @property
    def needs_score(self) -> bool:
        return self.policy in ("score_threshold", "hysteresis")

    def reset_bandit(self):
        self.t = 1
        self.counts.clear()
        self.means.clear()


def verify_score(khat: float, state: RoutingState, n_hi: int = 0) -> float:
    if state.score_mode == "static":
        return khat - state.cost
    return khat - state.cost * n_hi


def do_verify(state: RoutingState, span_len: int, s: float | None = None, bucket=None) -> bool:
    """Apply ``state.policy``; may flip the hysteresis bit or advance the bandit clock."""
    if state.policy == "min_span":
        return span_len >= state.tau_span
    if state.policy == "bandit":
        if bucket is None:
            raise ValueError("bandit policy needs a context bucket")
        return bandit_select(state, bucket) == 1
    if s is None:
        raise ValueError(f"{state.policy} policy needs a score")
    if state.policy == "score_threshold":
        return s >= state.tau_score
    if state.h_on and s < state.tau_off:
        state.h_on = False
    elif not state.h_on and s >= state.tau_on:
        state.h_on = True
    return state.h_on


def bandit_select(state: RoutingState, bucket) -> int:
    """UCB choice between diffusion (0) and verification (1); ties go to 1."""
    log_t = math.log(state.t)
    best, best_val = 1, -math.inf
    for a in (1, 0):
        n = state.counts.get((a, bucket), 0)
        val = math.inf if n == 0 else state.means[(a, bucket)] + state.ucb_beta * math.sqrt(log_t / n)
        if val > best_val:
            best, best_val = a, val
    state.t += 1
    return best


def bandit_update(state: RoutingState, bucket, action: int, decoded: int, verified: bool) -> float:
    """Fold reward ``decoded / time_cost`` into the running mean; returns it."""
    if decoded < 0:
        raise ValueError("decoded count must be >= 0")
    r = decoded / (2.0 if verified else 1.0)
    key = (int(action), bucket)
    n = state.counts.get(key, 0) + 1
    mu = state.means.get(key, 0.0)
    state.counts[key] = n
    state.means[key] = mu + (r - mu) / n
    return r


def _bin(x: float, lo: float, hi: float, n: int) -> int:
    if n == 1 or hi <= lo:
        return 0
    return min(max(int((x - lo) / (hi - lo) * n), 0), n - 1)


def context_bucket(span_len: int, block_size: int, progress: float, mean_entropy: float, bins) -> tuple:
    """Equal-width bins for span length on [1, B], progress and entropy on [0, 1]."""
    nb_span, nb_prog, nb_ent = bins
    return (
        _bin(span_len, 1, block_size, nb_span),
        _bin(progress, 0.0, 1.0, nb_prog),
        _bin(mean_entropy, 0.0, 1.0, nb_ent),
    )
