"""Attention masks used by the drafter and the verifier.

Run: python3 demos/01_masks.py
"""
import numpy as np

from selfspec.masks import draft_mask, mask_to_bits, verifier_mask

np.set_printoptions(linewidth=120)

# The verifier sees the drafted span under a causal mask, plus one MASK copy
# per position that attends to the drafted tokens strictly before it.
for L in (1, 2, 3):
    print(f"verifier_mask({L})")
    print(verifier_mask(L).astype(int))
    print()

# Draft masks interpolate between full attention (j=0) and causal (j=B).
B = 4
for j in range(B + 1):
    print(f"draft_mask({B}, {j}) -> {mask_to_bits(draft_mask(B, j))}")
