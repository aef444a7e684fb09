"""Tokens per forward pass as the block grows, with and without verification.

Run: python3 demos/03_block_size_sweep.py
"""
import numpy as np

from selfspec import DecodeConfig, ModelSpec, RoutingState, SyntheticModel, decode_sequence, summarize

model = SyntheticModel(ModelSpec(vocab_size=64, seed=7, drift=0.005, context_weight=0.02))
prompts = [[1 + j, 2, 3] for j in range(12)]


def run(B, sampler, tau_span=1):
    traces = []
    for j, prompt in enumerate(prompts):
        cfg = DecodeConfig(block_size=B, max_new_tokens=64)
        _, tr = decode_sequence(model, prompt, cfg, sampler, RoutingState("min_span", tau_span=tau_span),
                                np.random.default_rng(j))
        traces.append(tr)
    return summarize(traces)


ar = run(1, "bd3").tokens_per_nfe
print(f"{'B':>3} {'bd3 tok/nfe':>12} {'s2d2 tok/nfe':>13} {'accept':>7} {'speedup':>8}")
for B in (4, 8, 16, 32):
    base, spec = run(B, "bd3"), run(B, "s2d2")
    print(f"{B:>3} {base.tokens_per_nfe:>12.3f} {spec.tokens_per_nfe:>13.3f} "
          f"{spec.acceptance_rate:>7.3f} {spec.tokens_per_nfe / ar:>8.2f}")
