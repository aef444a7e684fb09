"""In-block attention masks for drafting, verification and cache passes.

Entry ``(r, c)`` is True when query row ``r`` may attend to key ``c``.
Committed-prefix keys are always visible and never materialized here.
"""

import numpy as np


def causal_mask(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("mask size must be >= 1")
    return np.tril(np.ones((n, n), dtype=bool))


def block_full_mask(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("mask size must be >= 1")
    return np.ones((n, n), dtype=bool)


def verifier_mask(span_len: int) -> np.ndarray:
    """Mask for a drafted span concatenated with an all-MASK copy of itself.

    Rows ``0..L-1`` are the drafted tokens under causal attention. Row
    ``L + i`` is the verifier query for span position ``i``: it sees drafted
    tokens ``0..i-1`` and its own MASK copy, never drafted token ``i``.
    """
    L = span_len
    if L < 1:
        raise ValueError("span length must be >= 1")
    m = np.zeros((2 * L, 2 * L), dtype=bool)
    m[:L, :L] = causal_mask(L)
    m[L:, :L] = np.tril(np.ones((L, L), dtype=bool), k=-1)
    m[L:, L:] = np.eye(L, dtype=bool)
    return m


def draft_mask(block_size: int, first_masked: int) -> np.ndarray:
    """Partially causal drafting mask.

    The committed in-block prefix ``[0, j)`` is causal and cannot see the
    undecided tail; rows ``j..B-1`` attend everywhere.
    """
    B, j = block_size, first_masked
    if B < 1 or not 0 <= j <= B:
        raise ValueError(f"need B >= 1 and 0 <= j <= B, got B={B}, j={j}")
    m = np.ones((B, B), dtype=bool)
    m[:j, :] = False
    m[:j, :j] = causal_mask(j) if j else m[:j, :j]
    return m


def mask_to_bits(mask: np.ndarray) -> str:
    """Row-major bit string, rows separated by '/' (debug output only)."""
    return "/".join("".join("1" if v else "0" for v in row) for row in np.asarray(mask))
