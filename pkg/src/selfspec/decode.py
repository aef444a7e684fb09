"""Block-wise decoding: the outer block loop and three block samplers.

``bd3``  confidence-thresholded diffusion decoding (static when tau = 1)
``s2d2`` the same drafter, with the first contiguous masked span optionally
         checked by the block-size-1 view of the model and accepted by
         rejection sampling
``subs`` exact masked-diffusion posterior steps on a noise schedule

Every model call counts one NFE. A block costs one NFE per draft step, one
per verified step, and one cache-update pass after it is complete.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import masks
from .core import BlockState, first_contiguous_span, normalized_entropy
from .metrics import BlockRecord, DecodeTrace, StepRecord
from .routing import (RoutingState, acceptance_probs, bandit_update, context_bucket,
                      do_verify, expected_prefix, verify_score)
from .synthmodel import NoiseSchedule, sample_categorical, subs_unmask_prob

SAMPLERS = ("bd3", "s2d2", "subs")


class DraftProbZero(ValueError):
    """A drafted token had zero draft probability: drafting and scoring disagree."""


@dataclass(frozen=True)
class DecodeConfig:
    block_size: int = 4
    max_steps: Optional[int] = None
    conf_threshold: float = 0.9
    temper: float = 1.0
    schedule: str = "dynamic"
    draft_mask_mode: str = "block"
    cache_mode: str = "block"
    verifier_view: str = "position_aligned"
    max_new_tokens: int = 64
    greedy: bool = False
    noise: str = "linear"

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 < self.conf_threshold <= 1:
            raise ValueError("conf_threshold must lie in (0, 1]")
        if not self.temper > 0:
            raise ValueError("temper must be > 0")
        if self.max_new_tokens < 0:
            raise ValueError("max_new_tokens must be >= 0")
        for name, allowed in (("schedule", ("static", "dynamic", "subs")),
                              ("draft_mask_mode", ("block", "ar")),
                              ("cache_mode", ("block", "ar")),
                              ("verifier_view", ("position_aligned", "right_shifted")),
                              ("noise", ("linear", "cosine"))):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @property
    def steps(self) -> int:
        return self.max_steps if self.max_steps is not None else self.block_size

    @property
    def threshold(self) -> float:
        """Effective commit threshold; the static schedule commits one token per step."""
        return 1.0 if self.schedule == "static" else self.conf_threshold

    @property
    def ar_view(self) -> bool:
        # with B=1 the drafter already is the block-size-1 verifier
        return self.block_size == 1

    def with_(self, **kw) -> "DecodeConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class SpanVerdict:
    accepted_count: int
    rejected_at: Optional[int] = None
    resampled_token: Optional[int] = None

    @property
    def committed_count(self) -> int:
        return self.accepted_count + (self.rejected_at is not None)


def accept_prob(p: float, q: float, gamma: float = 1.0) -> float:
    """``min(1, (q/p) ** gamma)``."""
    if not p > 0:
        raise DraftProbZero(f"draft probability must be positive, got {p}")
    ratio = q / p
    if ratio >= 1.0:
        return 1.0
    return ratio**gamma


def residual_dist(p_ver, p_draft) -> np.ndarray:
    """Renormalized positive part of ``p_ver - p_draft``; ``p_ver`` if that is empty."""
    p_ver = np.asarray(p_ver, dtype=np.float64)
    r = np.maximum(p_ver - np.asarray(p_draft, dtype=np.float64), 0.0)
    total = r.sum()
    if total <= 0:
        return p_ver.copy()
    return r / total


def speculative_accept(span_tokens, p_draft, p_ver, gamma: float, rng: np.random.Generator) -> SpanVerdict:
    """Left-to-right accept/reject scan over a drafted span.

    Stops at the first rejection and draws its replacement from the
    residual distribution.
    """
    L = len(span_tokens)
    if not (L == len(p_draft) == len(p_ver)) or L < 1:
        raise ValueError("span tokens and both Dist lists must share a length >= 1")
    for i, tok in enumerate(span_tokens):
        a = accept_prob(float(p_draft[i][tok]), float(p_ver[i][tok]), gamma)
        if rng.random() < a:
            continue
        res = residual_dist(p_ver[i], p_draft[i])
        new = int(sample_categorical(res[None, :], rng)[0])
        return SpanVerdict(i, i, new)
    return SpanVerdict(L)


class _Run:
    """Per-sequence decoding state: NFE counter, step counter, trace, RNG."""

    def __init__(self, model, cfg: DecodeConfig, rng, trace: DecodeTrace):
        self.model, self.cfg, self.rng, self.trace = model, cfg, rng, trace
        self.nfe = 0
        self.step = 0
        self.block_idx = 0
        self.last_dists = None
        self.n_steps = 0
        self.forced = ([], [], [])

    # model calls -----------------------------------------------------------
    def draft(self, block: BlockState):
        masked = block.masked
        if self.cfg.draft_mask_mode == "ar":
            mask = masks.draft_mask(block.size, int(masked[0]))
        else:
            mask = masks.block_full_mask(block.size)
        dists = self.model.forward(block.committed_prefix, block.tokens, block.positions, mask,
                                   masked, verifier=self.cfg.ar_view)
        self.nfe += 1
        if self.cfg.greedy:
            xhat = np.argmax(dists, axis=1)
        else:
            xhat = sample_categorical(dists, self.rng)
        p = dists[np.arange(len(masked)), xhat]
        self.last_dists = dict(zip(masked.tolist(), dists))
        return masked, xhat, p, dists

    def verifier(self, block: BlockState, span: range, drafted: np.ndarray) -> np.ndarray:
        L = len(span)
        mask_id = self.model.vocab.mask_id
        ctx = np.concatenate([block.committed_prefix, block.tokens[:span.start]])
        abs_pos = block.start + np.arange(span.start, span.stop)
        if self.cfg.verifier_view == "position_aligned":
            toks = np.concatenate([drafted, np.full(L, mask_id)])
            out = self.model.forward(ctx, toks, np.concatenate([abs_pos, abs_pos]),
                                     masks.verifier_mask(L), range(L, 2 * L), verifier=True)
        else:
            # row r of a right-shifted model predicts the token after it
            toks = np.concatenate([ctx[-1:], drafted[:-1]])
            out = self.model.forward(ctx[:-1], toks, abs_pos - 1, masks.causal_mask(L),
                                     range(L), verifier=True, predict_offset=1)
        self.nfe += 1
        return out

    def cache_pass(self, block: BlockState):
        if self.cfg.cache_mode == "ar":
            mask = masks.draft_mask(block.size, block.size)
        else:
            mask = masks.block_full_mask(block.size)
        self.model.forward(block.committed_prefix, block.tokens, block.positions, mask, [])
        self.nfe += 1

    # commits ---------------------------------------------------------------
    def record(self, **kw) -> StepRecord:
        kw.setdefault("ver_conf", None)
        kw.setdefault("score", None)
        kw.setdefault("khat", None)
        kw.setdefault("verified", False)
        kw.setdefault("accepted_count", 0)
        kw.setdefault("rejected_at", None)
        rec = StepRecord(step=self.step, block=self.block_idx, nfe_after=self.nfe, **kw)
        self.trace.steps.append(rec)
        self.step += 1
        return rec

    def threshold_commit(self, block, masked, xhat, p, span_len, score=None, khat=None) -> StepRecord:
        sel = p > self.cfg.threshold
        sel[int(np.argmax(p))] = True
        pos = masked[sel]
        block.tokens[pos] = xhat[sel]
        return self.record(mode="diffusion", span_len=span_len, n_masked=len(masked),
                           committed=pos.tolist(), tokens=xhat[sel].tolist(),
                           conf=p[sel].tolist(), resampled=[False] * len(pos),
                           score=score, khat=khat)

    def force_commit(self, block: BlockState) -> tuple[list, list, list]:
        rest = block.masked.tolist()
        toks, confs = [], []
        for i in rest:
            d = self.last_dists[i]
            toks.append(int(np.argmax(d)))
            confs.append(float(d.max()))
        block.tokens[rest] = toks
        return rest, toks, confs


def _sample_block(run: _Run, block: BlockState, step_fn) -> None:
    """Up to T steps of ``step_fn``; leftover masks are force-committed by argmax."""
    n = 0
    for _ in range(run.cfg.steps):
        if block.done:
            break
        step_fn(run, block)
        n += 1
    run.n_steps = n
    run.forced = run.force_commit(block) if not block.done else ([], [], [])


def _bd3_step(run: _Run, block: BlockState):
    masked, xhat, p, _ = run.draft(block)
    run.threshold_commit(block, masked, xhat, p, len(first_contiguous_span(masked)))


def _s2d2_step(run: _Run, block: BlockState, policy: RoutingState, routing_rng):
    cfg = run.cfg
    masked, xhat, p, dists = run.draft(block)
    span = first_contiguous_span(masked)
    L = len(span)
    score = khat = bucket = None
    if policy.needs_score:
        alpha = acceptance_probs(policy.estimator, dists[:L], p[:L], routing_rng)
        khat = expected_prefix(alpha)
        score = verify_score(khat, policy, int(np.sum(p > cfg.conf_threshold)))
    if policy.policy == "bandit" and not cfg.ar_view:
        ent = float(np.mean([normalized_entropy(d) for d in dists[:L]]))
        progress = 1.0 - len(masked) / block.size
        bucket = context_bucket(L, block.size, progress, ent, policy.bins)
    verify = not cfg.ar_view and do_verify(policy, L, score, bucket)

    if not verify:
        rec = run.threshold_commit(block, masked, xhat, p, L, score, khat)
    else:
        q = run.verifier(block, span, xhat[:L])
        verdict = speculative_accept(xhat[:L], dists[:L], q, cfg.temper, run.rng)
        n = verdict.committed_count
        toks = xhat[:n].copy()
        conf = p[:n].copy()
        if verdict.rejected_at is not None:
            toks[-1] = verdict.resampled_token
            conf[-1] = q[n - 1][verdict.resampled_token]
        pos = np.arange(span.start, span.start + n)
        block.tokens[pos] = toks
        rec = run.record(mode="speculative", span_len=L, n_masked=len(masked), verified=True,
                         accepted_count=verdict.accepted_count, rejected_at=verdict.rejected_at,
                         committed=pos.tolist(), tokens=toks.tolist(), conf=conf.tolist(),
                         ver_conf=[float(q[i][t]) for i, t in enumerate(toks)],
                         resampled=[False] * verdict.accepted_count + [True] * (n - verdict.accepted_count),
                         score=score, khat=khat)
    if bucket is not None:
        bandit_update(policy, bucket, int(verify), len(rec.committed), verify)


def _subs_step(run: _Run, block: BlockState, schedule: NoiseSchedule, k: int):
    T = run.cfg.steps
    t, s = 1.0 - k / T, max(1.0 - (k + 1) / T, 0.0)
    rho = subs_unmask_prob(schedule, s, t)
    masked, _, _, dists = run.draft(block)
    by_pos = dict(zip(masked.tolist(), dists))
    reveal = run.rng.random(len(masked)) < rho
    chosen = masked[reveal]
    toks = sample_categorical(dists[reveal], run.rng) if len(chosen) else np.zeros(0, dtype=np.int64)
    block.tokens[chosen] = toks
    run.record(mode="subs", span_len=len(first_contiguous_span(masked)), n_masked=len(masked),
               committed=chosen.tolist(), tokens=toks.tolist(),
               conf=[float(by_pos[int(i)][tk]) for i, tk in zip(chosen, toks)],
               resampled=[False] * len(chosen))


def _finish_block(run: _Run, block: BlockState):
    forced, ftoks, fconf = run.forced
    run.cache_pass(block)
    run.trace.blocks.append(BlockRecord(block=run.block_idx, start=block.start, size=block.size,
                                        n_steps=run.n_steps, exhausted=bool(forced), forced=forced,
                                        forced_tokens=ftoks, forced_conf=fconf, nfe_after=run.nfe))


def _resume(model, cfg, rng, trace) -> _Run:
    run = _Run(model, cfg, rng, trace)
    run.nfe = trace.nfe
    run.step = len(trace.steps)
    run.block_idx = len(trace.blocks)
    return run


def sample_block_bd3(model, block: BlockState, cfg: DecodeConfig, rng, trace: DecodeTrace) -> BlockState:
    """Confidence-thresholded diffusion decoding of one block.

    Appends one step record per draft pass. No cache pass is run here;
    :func:`decode_sequence` does that and flags forced commits.
    """
    _sample_block(_resume(model, cfg, rng, trace), block, _bd3_step)
    return block


def sample_block_s2d2(model, block: BlockState, cfg: DecodeConfig, policy: RoutingState, rng,
                      trace: DecodeTrace, routing_rng=None) -> BlockState:
    """Self-speculative decoding of one block; see :func:`sample_block_bd3`."""
    _sample_block(_resume(model, cfg, rng, trace), block,
                  lambda r, b: _s2d2_step(r, b, policy, routing_rng))
    return block


def decode_sequence(model, prompt, cfg: DecodeConfig, sampler: Optional[str] = None,
                    policy: Optional[RoutingState] = None, rng: Optional[np.random.Generator] = None,
                    routing_rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, DecodeTrace]:
    """Decode up to ``cfg.max_new_tokens`` after ``prompt`` one block at a time.

    Stops after the block containing the first EOS. The returned sequence is
    the prompt plus generated tokens up to and including that EOS; the trace
    records every committed token, including any decoded after EOS within
    the final block.
    """
    prompt = np.asarray(prompt, dtype=np.int64)
    if prompt.size == 0:
        raise ValueError("prompt must be non-empty")
    if sampler is None:
        sampler = "subs" if cfg.schedule == "subs" else "bd3"
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    if sampler == "s2d2":
        policy = policy if policy is not None else RoutingState()
        if routing_rng is None:
            routing_rng = rng.spawn(1)[0]
    schedule = NoiseSchedule.cosine() if cfg.noise == "cosine" else NoiseSchedule.linear()
    vocab = model.vocab

    trace = DecodeTrace(prompt_len=len(prompt))
    run = _Run(model, cfg, rng, trace)
    seq = prompt.copy()
    generated = 0
    while generated < cfg.max_new_tokens:
        size = min(cfg.block_size, cfg.max_new_tokens - generated)
        block = BlockState.fresh(seq, size, vocab.mask_id)
        if sampler == "bd3":
            _sample_block(run, block, _bd3_step)
        elif sampler == "s2d2":
            _sample_block(run, block, lambda r, b: _s2d2_step(r, b, policy, routing_rng))
        else:
            counter = iter(range(cfg.steps))
            _sample_block(run, block, lambda r, b: _subs_step(r, b, schedule, next(counter)))
        _finish_block(run, block)
        run.block_idx += 1
        seq = np.concatenate([seq, block.tokens])
        generated += size
        if np.any(block.tokens == vocab.eos_id):
            break

    gen = seq[len(prompt):]
    eos = np.flatnonzero(gen == vocab.eos_id)
    if len(eos):
        seq = seq[:len(prompt) + eos[0] + 1]
    return seq, trace
