"""Block-diffusion decoding with self-speculative verification.

The drafter is a block-diffusion pass; the verifier is the block-size-1
autoregressive view of the same model. Everything runs on a deterministic
synthetic model so distributional claims can be checked exactly.
"""

from .core import BlockState, Vocab
from .decode import (DecodeConfig, accept_prob, decode_sequence, residual_dist, sample_block_bd3,
                     sample_block_s2d2, speculative_accept)
from .masks import block_full_mask, causal_mask, draft_mask, verifier_mask
from .metrics import (DecodeTrace, confidence_curve, global_arness_at_k, local_arness_at_k,
                      local_energy, nfe_speedup, summarize)
from .routing import EstimatorSpec, RoutingState, acceptance_probs, do_verify, expected_prefix
from .synthmodel import ModelSpec, NoiseSchedule, SyntheticModel

__all__ = [
    "BlockState", "Vocab", "DecodeConfig", "accept_prob", "decode_sequence", "residual_dist",
    "sample_block_bd3", "sample_block_s2d2", "speculative_accept", "block_full_mask",
    "causal_mask", "draft_mask", "verifier_mask", "DecodeTrace", "confidence_curve",
    "global_arness_at_k", "local_arness_at_k", "local_energy", "nfe_speedup", "summarize",
    "EstimatorSpec", "RoutingState", "acceptance_probs", "do_verify", "expected_prefix",
    "ModelSpec", "NoiseSchedule", "SyntheticModel",
]
