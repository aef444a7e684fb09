"""Token, distribution and block primitives shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIST_ATOL = 1e-9


class AllZeroError(ValueError):
    """Raised when a weight vector has no positive mass to normalize."""


@dataclass(frozen=True)
class Vocab:
    """Vocabulary layout: ``size`` ids with MASK and EOS reserved at the top."""

    size: int = 64

    def __post_init__(self):
        if self.size < 4:
            raise ValueError(f"vocab size must be >= 4, got {self.size}")

    @property
    def mask_id(self) -> int:
        return self.size - 1

    @property
    def eos_id(self) -> int:
        return self.size - 2


def normalize_dist(weights) -> np.ndarray:
    """Scale non-negative ``weights`` so they sum to one."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise AllZeroError("cannot normalize an all-zero weight vector")
    return w / total


def is_dist(d, atol: float = DIST_ATOL) -> bool:
    d = np.asarray(d, dtype=np.float64)
    return d.ndim == 1 and bool(np.all(d >= 0)) and abs(d.sum() - 1.0) <= atol


def top1_margin(d) -> float:
    """Largest minus second-largest probability."""
    d = np.asarray(d, dtype=np.float64)
    if d.size < 2:
        raise ValueError("top1_margin needs at least two entries")
    top2 = np.partition(d, -2)[-2:]
    return float(top2[1] - top2[0])


def normalized_entropy(d) -> float:
    """Shannon entropy divided by ``log(len(d))``, with 0 log 0 = 0."""
    d = np.asarray(d, dtype=np.float64)
    if d.size < 2:
        return 0.0
    nz = d[d > 0]
    h = -float(np.sum(nz * np.log(nz)))
    return min(max(h / np.log(d.size), 0.0), 1.0)


def first_contiguous_span(masked_positions) -> range:
    """Maximal run of consecutive indices starting at the smallest one.

    >>> first_contiguous_span([2, 3, 4, 7])
    range(2, 5)
    """
    idx = list(masked_positions)
    if not idx:
        return range(0)
    start = end = idx[0]
    for i in idx[1:]:
        if i != end + 1:
            break
        end = i
    return range(start, end + 1)


@dataclass
class BlockState:
    """The block being decoded plus everything committed before it.

    ``tokens`` is mutated in place by the samplers; positions holding
    ``mask_id`` are still undecided.
    """

    tokens: np.ndarray
    committed_prefix: np.ndarray
    mask_id: int
    start: int = field(init=False)

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64).copy()
        self.committed_prefix = np.asarray(self.committed_prefix, dtype=np.int64)
        if np.any(self.committed_prefix == self.mask_id):
            raise ValueError("committed prefix may not contain MASK")
        self.start = len(self.committed_prefix)

    @classmethod
    def fresh(cls, prefix, block_size: int, mask_id: int) -> "BlockState":
        return cls(np.full(block_size, mask_id, dtype=np.int64), prefix, mask_id)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def masked(self) -> np.ndarray:
        return np.flatnonzero(self.tokens == self.mask_id)

    @property
    def done(self) -> bool:
        return not np.any(self.tokens == self.mask_id)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)
