"""Decode traces and the diagnostics computed from them.

All functions here are pure over finished traces.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class ZeroNfe(ValueError):
    pass


class NonpositiveProb(ValueError):
    pass


@dataclass
class StepRecord:
    step: int
    block: int
    mode: str  # diffusion | speculative | subs
    span_len: int
    n_masked: int
    verified: bool
    accepted_count: int
    rejected_at: Optional[int]
    committed: list
    tokens: list
    conf: list
    ver_conf: Optional[list]
    resampled: list
    score: Optional[float]
    khat: Optional[float]
    nfe_after: int

    def to_dict(self) -> dict:
        return {"kind": "step", **asdict(self)}


@dataclass
class BlockRecord:
    """Closes a block: the cache-update pass plus any forced commits."""

    block: int
    start: int
    size: int
    n_steps: int
    exhausted: bool
    forced: list
    forced_tokens: list
    forced_conf: list
    nfe_after: int

    def to_dict(self) -> dict:
        return {"kind": "block", **asdict(self)}


@dataclass
class DecodeTrace:
    prompt_len: int = 0
    steps: list = field(default_factory=list)
    blocks: list = field(default_factory=list)

    @property
    def nfe(self) -> int:
        last = [r.nfe_after for r in self.steps[-1:] + self.blocks[-1:]]
        return max(last, default=0)

    @property
    def n_tokens(self) -> int:
        return sum(len(s.committed) for s in self.steps) + sum(len(b.forced) for b in self.blocks)

    @property
    def n_verified(self) -> int:
        return sum(s.verified for s in self.steps)

    def records(self) -> list:
        """Step and block records interleaved in execution order."""
        out, si = [], 0
        for b in self.blocks:
            while si < len(self.steps) and self.steps[si].block == b.block:
                out.append(self.steps[si])
                si += 1
            out.append(b)
        out.extend(self.steps[si:])
        return out


@dataclass(frozen=True)
class CommitEvent:
    block: int
    position: int  # block-local
    block_size: int
    conf: float
    step_tokens: int  # how many tokens the owning step committed


def commit_events(trace: DecodeTrace) -> list:
    """Every committed token in commit order; ties within a step go left to right."""
    events = []
    by_block: dict = {}
    for s in trace.steps:
        by_block.setdefault(s.block, []).append(s)
    for b in trace.blocks:
        for s in by_block.get(b.block, []):
            for pos, c in sorted(zip(s.committed, s.conf)):
                events.append(CommitEvent(s.block, pos, b.size, c, len(s.committed)))
        for pos, c in sorted(zip(b.forced, b.forced_conf)):
            events.append(CommitEvent(b.block, pos, b.size, c, len(b.forced)))
    return events


def _traces(trace) -> list:
    return [trace] if isinstance(trace, DecodeTrace) else list(trace)


def nfe_speedup(trace, baseline) -> float:
    """Baseline NFE per token over method NFE per token."""
    t, b = _traces(trace), _traces(baseline)
    t_nfe, t_tok = sum(x.nfe for x in t), sum(x.n_tokens for x in t)
    b_nfe, b_tok = sum(x.nfe for x in b), sum(x.n_tokens for x in b)
    if t_nfe == 0 or t_tok == 0:
        raise ZeroNfe("method trace has no forward passes")
    if b_nfe == 0 or b_tok == 0:
        raise ZeroNfe("baseline trace has no forward passes")
    return (b_nfe / b_tok) / (t_nfe / t_tok)


def _local_hits(trace: DecodeTrace, k: int) -> list:
    hits, prev, cur = [], -1, None
    for e in commit_events(trace):
        if e.block != cur:
            cur, prev = e.block, -1
        hits.append(prev < e.position <= prev + k)
        prev = e.position
    return hits


def _global_hits(trace: DecodeTrace, k: int) -> list:
    hits, cur, masked = [], None, []
    for e in commit_events(trace):
        if e.block != cur:
            cur, masked = e.block, list(range(e.block_size))
        hits.append(e.position in masked[:k])
        masked.remove(e.position)
    return hits


def _arness(trace, k: int, fn, pooled: bool) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    per = [fn(t, k) for t in _traces(trace)]
    per = [h for h in per if h]
    if not per:
        raise ValueError("trace has no commit events")
    if pooled:
        flat = [x for h in per for x in h]
        return sum(flat) / len(flat)
    return float(np.mean([sum(h) / len(h) for h in per]))


def local_arness_at_k(trace, k: int = 2, pooled: bool = True) -> float:
    """Share of commits landing within ``k`` positions right after the previous commit.

    The first commit of a block is measured from just before the block start.
    ``pooled=False`` averages per trace instead of over all events.
    """
    return _arness(trace, k, _local_hits, pooled)


def global_arness_at_k(trace, k: int = 2, pooled: bool = True) -> float:
    """Share of commits landing on one of the ``k`` leftmost still-masked positions."""
    return _arness(trace, k, _global_hits, pooled)


def local_energy(p: float, q: float) -> float:
    """Residual energy ``-log q + log p`` of a drafted token."""
    if not (p > 0 and q > 0):
        raise NonpositiveProb(f"need p, q > 0, got p={p}, q={q}")
    return -math.log(q) + math.log(p)


def confidence_curve(trace, n_bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Mean commit confidence and mean tokens-per-step over normalized decode progress.

    Progress of a commit is its index in commit order divided by the number
    of commits. Empty bins are NaN.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    conf_sum, tps_sum, cnt = np.zeros(n_bins), np.zeros(n_bins), np.zeros(n_bins)
    for t in _traces(trace):
        ev = commit_events(t)
        for i, e in enumerate(ev):
            b = min(int(i / len(ev) * n_bins), n_bins - 1)
            conf_sum[b] += e.conf
            tps_sum[b] += e.step_tokens
            cnt[b] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return conf_sum / cnt, tps_sum / cnt


@dataclass(frozen=True)
class Summary:
    """Aggregate statistics over one or more traces."""

    sequences: int
    tokens: int
    nfe: int
    steps: int
    verified_steps: int
    accepted_tokens: int
    rejections: int
    tokens_per_nfe: float
    verify_rate: float
    mean_accepted_prefix: Optional[float]
    rejection_rate: Optional[float]
    acceptance_rate: Optional[float]
    local_arness: float
    global_arness: float


def summarize(traces: Iterable[DecodeTrace], k: int = 2) -> Summary:
    traces = list(traces)
    steps = [s for t in traces for s in t.steps]
    ver = [s for s in steps if s.verified]
    tokens = sum(t.n_tokens for t in traces)
    nfe = sum(t.nfe for t in traces)
    accepted = sum(s.accepted_count for s in ver)
    rejections = sum(s.rejected_at is not None for s in ver)
    return Summary(
        sequences=len(traces),
        tokens=tokens,
        nfe=nfe,
        steps=len(steps),
        verified_steps=len(ver),
        accepted_tokens=accepted,
        rejections=rejections,
        tokens_per_nfe=tokens / nfe if nfe else 0.0,
        verify_rate=len(ver) / len(steps) if steps else 0.0,
        mean_accepted_prefix=accepted / len(ver) if ver else None,
        rejection_rate=rejections / len(ver) if ver else None,
        acceptance_rate=accepted / (accepted + rejections) if ver else None,
        local_arness=local_arness_at_k(traces, k) if tokens else 1.0,
        global_arness=global_arness_at_k(traces, k) if tokens else 1.0,
    )


def per_token_nfe(traces: Sequence[DecodeTrace]) -> float:
    tok = sum(t.n_tokens for t in traces)
    return sum(t.nfe for t in traces) / tok if tok else math.nan
