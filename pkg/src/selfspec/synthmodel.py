"""Deterministic stand-in for a block-diffusion language model.

Every output distribution is a pure function of the model seed, the absolute
position being predicted, and the set of (position, token) pairs the query
can see. Scores come from a 64-bit integer hash, so the model needs no
weights and runs anywhere.

Logits for candidate ``v`` at absolute position ``q``::

    z(v)   = u(seed, q, v) + context_weight * ctx(v)   [+ drift * (g(seed, q, v) - 1/2)]
    ctx(v) = sum over visible non-MASK (pos, tok) of (w(seed, q, pos, tok, v) - 1/2) / sqrt(n)
    logit  = sharpness * z(v) + eos_rate * q * [v == EOS],  logit[MASK] = -inf

The bracketed drift term is only present in verifier mode. MASK keys carry
no information and are skipped, so drafter and verifier agree exactly when
``drift == 0`` and their informative contexts match.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np

from .core import BlockState, Vocab

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)

# stream salts keep the four hash families independent
_BASE, _PAIR, _DRIFT = 0x11, 0x22, 0x33


class DimensionMismatch(ValueError):
    pass


class InvalidRange(ValueError):
    pass


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    x = x + _GOLDEN
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def _u64(v) -> np.ndarray:
    # 1-d even for scalars: numpy scalar arithmetic warns on wraparound
    if isinstance(v, (int, np.integer)):
        return np.array([int(v) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.atleast_1d(np.asarray(v, dtype=np.int64)).astype(np.uint64)


def _unit(h: np.ndarray) -> np.ndarray:
    """Map hashes to the open interval (0, 1)."""
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class ModelSpec:
    vocab_size: int = 64
    seed: int = 0
    sharpness: float = 60.0
    drift: float = 0.0
    context_weight: float = 0.05
    eos_rate: float = 0.0

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ValueError("vocab_size must be >= 4")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be > 0")
        if self.drift < 0 or self.context_weight < 0 or self.eos_rate < 0:
            raise ValueError("drift, context_weight and eos_rate must be >= 0")

    @property
    def vocab(self) -> Vocab:
        return Vocab(self.vocab_size)


class Model(Protocol):
    """Anything the decoders can drive. See :meth:`SyntheticModel.forward`."""

    vocab: Vocab

    def forward(self, context, tokens, positions, mask, queries, *,
                verifier: bool = False, predict_offset: int = 0) -> np.ndarray: ...


@lru_cache(maxsize=16384)
def _pair_sum(seed: int, qpos: int, vocab_size: int, pairs: tuple) -> tuple[np.ndarray, int]:
    """Un-normalized context score and informative-pair count for one query.

    ``pairs`` is a tuple of (pos, tok) with MASK already removed.
    """
    if not pairs:
        return np.zeros(vocab_size), 0
    arr = np.asarray(pairs, dtype=np.int64)
    head = _mix(_u64(seed) ^ _u64(_PAIR))
    head = _mix(head ^ _u64(qpos))
    key = _mix(head ^ _u64(arr[:, 0]))
    key = _mix(key ^ _u64(arr[:, 1]))
    cand = _u64(np.arange(vocab_size))
    w = _unit(_mix(key[:, None] ^ cand[None, :]))
    s = (w - 0.5).sum(axis=0)
    s.setflags(write=False)
    return s, len(pairs)


@lru_cache(maxsize=16384)
def _positional(seed: int, qpos: int, vocab_size: int, salt: int) -> np.ndarray:
    cand = _u64(np.arange(vocab_size))
    head = _mix(_mix(_u64(seed) ^ _u64(salt)) ^ _u64(qpos))
    out = _unit(_mix(head ^ cand))
    out.setflags(write=False)
    return out


class SyntheticModel:
    """Hash-scored model; pure, so safe to share between threads."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.vocab = spec.vocab

    def __repr__(self):
        return f"SyntheticModel({self.spec!r})"

    def _dist(self, qpos: int, ctx_pairs: tuple, blk_pairs: tuple, verifier: bool) -> np.ndarray:
        sp, V = self.spec, self.vocab.size
        z = np.array(_positional(sp.seed, qpos, V, _BASE))
        if sp.context_weight:
            s_ctx, n_ctx = _pair_sum(sp.seed, qpos, V, ctx_pairs)
            s_blk, n_blk = _pair_sum(sp.seed, qpos, V, blk_pairs)
            n = n_ctx + n_blk
            if n:
                z += sp.context_weight * (s_ctx + s_blk) / np.sqrt(n)
        if verifier and sp.drift:
            z += sp.drift * (_positional(sp.seed, qpos, V, _DRIFT) - 0.5)
        logits = sp.sharpness * z
        logits[self.vocab.eos_id] += sp.eos_rate * qpos
        logits[self.vocab.mask_id] = -np.inf
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def forward(self, context, tokens, positions, mask, queries, *,
                verifier: bool = False, predict_offset: int = 0) -> np.ndarray:
        """One forward pass; returns a ``(len(queries), V)`` array of Dists.

        ``context`` holds committed tokens at absolute positions
        ``0..len(context)-1`` and is visible to every query. ``tokens`` sit
        at absolute ``positions`` and are visible to row ``r`` where
        ``mask[r]`` is True. A row predicts absolute position
        ``positions[r] + predict_offset`` (1 for right-shifted models).
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        positions = np.asarray(positions, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        n = len(tokens)
        if mask.shape != (n, n) or len(positions) != n:
            raise DimensionMismatch(
                f"mask {mask.shape} inconsistent with {n} input tokens / {len(positions)} positions")
        queries = [int(q) for q in queries]
        if any(not 0 <= q < n for q in queries):
            raise DimensionMismatch("query index outside the input")
        mask_id = self.vocab.mask_id
        ctx = np.asarray(context, dtype=np.int64)
        ctx_pairs = tuple((i, int(t)) for i, t in enumerate(ctx) if t != mask_id)
        out = np.empty((len(queries), self.vocab.size))
        for k, r in enumerate(queries):
            vis = np.flatnonzero(mask[r] & (tokens != mask_id))
            blk_pairs = tuple(sorted((int(positions[c]), int(tokens[c])) for c in vis))
            out[k] = self._dist(int(positions[r]) + predict_offset, ctx_pairs, blk_pairs, verifier)
        return out

    def ar_dist(self, prefix, *, verifier: bool = True) -> np.ndarray:
        """Next-token Dist given ``prefix`` under block-size-1 masking."""
        prefix = np.asarray(prefix, dtype=np.int64)
        n = len(prefix)
        m = self.vocab.mask_id
        return self.forward(prefix, [m], [n], np.ones((1, 1), dtype=bool), [0], verifier=verifier)[0]


# --- noise schedule and SUBS reverse step ---------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    """Signal level ``alpha(t)``, strictly decreasing from 1 at t=0 to 0 at t=1."""

    alpha: Callable[[float], float]
    name: str = "custom"

    @classmethod
    def linear(cls) -> "NoiseSchedule":
        return cls(lambda t: 1.0 - t, "linear")

    @classmethod
    def cosine(cls) -> "NoiseSchedule":
        return cls(lambda t: float(np.cos(0.5 * np.pi * t)) if t < 1 else 0.0, "cosine")


def subs_unmask_prob(schedule: NoiseSchedule, s: float, t: float) -> float:
    """Probability a masked position is revealed going from ``t`` to ``s < t``."""
    if not 0 <= s < t <= 1:
        raise InvalidRange(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    a_s, a_t = schedule.alpha(s), schedule.alpha(t)
    return float(min(max((a_s - a_t) / (1.0 - a_t), 0.0), 1.0))


def sample_categorical(dists: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of ``dists`` using a single uniform per row."""
    dists = np.atleast_2d(dists)
    u = rng.random(len(dists))
    cdf = np.cumsum(dists, axis=1)
    idx = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
    # guard against round-off landing on a zero-probability tail entry
    idx = np.minimum(idx, dists.shape[1] - 1)
    bad = dists[np.arange(len(idx)), idx] <= 0
    if np.any(bad):
        idx[bad] = np.argmax(dists[bad], axis=1)
    return idx


def subs_step(block: BlockState, dists: dict, rho: float, rng: np.random.Generator) -> list[int]:
    """Reveal each masked position with probability ``rho``; fills in place.

    ``dists`` maps block-local position to its Dist. Returns the revealed
    positions in ascending order.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    masked = block.masked
    if len(masked) == 0:
        return []
    reveal = rng.random(len(masked)) < rho
    chosen = masked[reveal]
    if len(chosen):
        toks = sample_categorical(np.stack([dists[int(i)] for i in chosen]), rng)
        block.tokens[chosen] = toks
    return [int(i) for i in chosen]
