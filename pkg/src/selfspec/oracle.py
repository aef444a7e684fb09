"""Brute-force and Monte Carlo references for checking the engine.

Nothing here reuses the decoding or routing arithmetic: the accept/resample
rule and the expected-prefix sum are re-derived from scratch so a bug in
one path cannot hide in the other. The estimator report is the exception,
since it exists to evaluate the routing estimators themselves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Vocab

MAX_ENUM_LEN = 12


class TooLarge(ValueError):
    pass


def brute_force_expected_prefix(alpha) -> float:
    """Mean count of leading successes over all 2^L Bernoulli outcomes."""
    alpha = [float(a) for a in alpha]
    if len(alpha) > MAX_ENUM_LEN:
        raise TooLarge(f"enumeration limited to L <= {MAX_ENUM_LEN}, got {len(alpha)}")
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(alpha)):
        prob = 1.0
        for b, a in zip(bits, alpha):
            prob *= a if b else 1.0 - a
        if prob == 0.0:
            continue
        lead = 0
        for b in bits:
            if not b:
                break
            lead += 1
        total += prob * lead
    return total


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def _reference_kernel(draft, ver, gamma, n, rng):
    """Vectorized single-position draft -> accept/resample, n independent times."""
    V = len(draft)
    tok = rng.choice(V, size=n, p=draft)
    ratio = ver[tok] / draft[tok]
    keep = rng.random(n) < np.minimum(1.0, ratio**gamma)
    pos = np.clip(ver - draft, 0.0, None)
    pos = pos / pos.sum() if pos.sum() > 0 else ver
    out = tok.copy()
    n_rej = int((~keep).sum())
    if n_rej:
        out[~keep] = rng.choice(V, size=n_rej, p=pos)
    return out


def mc_committed_token_law(p_draft, p_ver, gamma: float = 1.0, n_samples: int = 200_000,
                           rng: Optional[np.random.Generator] = None,
                           kernel: Optional[Callable] = None) -> tuple[np.ndarray, float]:
    """Empirical law of the committed token for a length-1 speculative span.

    Returns the empirical Dist and its total-variation distance to
    ``p_ver``. ``kernel(draft, ver, gamma, n, rng) -> tokens`` swaps in
    another implementation of the draw (e.g. the engine's).
    """
    draft = np.asarray(p_draft, dtype=np.float64)
    ver = np.asarray(p_ver, dtype=np.float64)
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 10_000")
    if len(draft) > 16 or len(draft) != len(ver):
        raise ValueError("need matching vocabularies of size <= 16")
    rng = rng if rng is not None else np.random.default_rng(0)
    toks = (kernel or _reference_kernel)(draft, ver, gamma, n_samples, rng)
    emp = np.bincount(toks, minlength=len(draft)) / n_samples
    return emp, tv_distance(emp, ver)


def random_dist_pair(V: int, rng: np.random.Generator, concentration: float = 1.0):
    """Two independent Dirichlet draws with full support."""
    a = rng.dirichlet(np.full(V, concentration))
    b = rng.dirichlet(np.full(V, concentration))
    return np.maximum(a, 1e-12) / np.maximum(a, 1e-12).sum(), np.maximum(b, 1e-12) / np.maximum(b, 1e-12).sum()


# --- estimator accuracy ---------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    mean_error: float
    std_error: float
    mae: float
    n_trials: int


def estimator_error_report(est, model, n_trials: int = 200, block_size: int = 8,
                           prompt_len: int = 6, rng: Optional[np.random.Generator] = None) -> ErrorReport:
    """Signed error, its std, and MAE of an estimator's predicted accepted prefix.

    Each trial drafts a fresh all-MASK block after a random prompt, verifies
    the whole block under the block-size-1 view, and compares the estimate
    with the realized accepted prefix (accepted tokens before the first
    rejection). ``est="exact"`` uses the true per-token ratios
    ``min(1, q/p)``, which is unbiased by construction.
    """
    from .routing import acceptance_probs

    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    rng = rng if rng is not None else np.random.default_rng(0)
    vocab: Vocab = model.vocab
    B, mask_id = block_size, vocab.mask_id
    errors = np.empty(n_trials)
    for k in range(n_trials):
        prompt = rng.integers(0, vocab.eos_id, size=prompt_len)
        pos = np.arange(prompt_len, prompt_len + B)
        draft = model.forward(prompt, np.full(B, mask_id), pos, np.ones((B, B), bool), range(B))
        cdf = np.cumsum(draft, axis=1)
        toks = np.minimum((cdf < rng.random(B)[:, None]).sum(axis=1), vocab.size - 2)
        p = draft[np.arange(B), toks]
        # verifier query i: drafted tokens < i plus its own MASK copy
        vmask = np.zeros((2 * B, 2 * B), bool)
        vmask[:B, :B] = np.tril(np.ones((B, B), bool))
        vmask[B:, :B] = np.tril(np.ones((B, B), bool), -1)
        vmask[B:, B:] = np.eye(B, dtype=bool)
        ver = model.forward(prompt, np.concatenate([toks, np.full(B, mask_id)]),
                            np.concatenate([pos, pos]), vmask, range(B, 2 * B), verifier=True)
        q = ver[np.arange(B), toks]
        ratios = np.minimum(1.0, q / p)
        actual = 0
        for r in ratios:
            if rng.random() >= r:
                break
            actual += 1
        if isinstance(est, str):
            if est != "exact":
                raise ValueError(f"unknown estimator {est!r}")
            alpha = ratios
        else:
            alpha = acceptance_probs(est, draft, p, rng)
        khat = float(sum(np.prod(alpha[:j + 1]) for j in range(B)))
        errors[k] = khat - actual
    return ErrorReport(float(errors.mean()), float(errors.std(ddof=1)),
                       float(np.abs(errors).mean()), n_trials)
