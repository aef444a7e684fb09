"""How routing policies trade verification cost against accepted tokens.

Run: python3 demos/04_routing_and_arness.py
"""
import numpy as np

from selfspec import (DecodeConfig, EstimatorSpec, ModelSpec, RoutingState, SyntheticModel,
                      confidence_curve, decode_sequence, summarize)

model = SyntheticModel(ModelSpec(vocab_size=64, seed=3, drift=0.02, context_weight=0.05))
cfg = DecodeConfig(block_size=16, max_new_tokens=64, conf_threshold=0.9)

policies = {
    "never": lambda: RoutingState("min_span", tau_span=10**6),
    "always": lambda: RoutingState("min_span", tau_span=1),
    "min_span=4": lambda: RoutingState("min_span", tau_span=4),
    "score>=2": lambda: RoutingState("score_threshold", tau_score=2.0,
                                     estimator=EstimatorSpec("soft_entropy")),
    "hysteresis": lambda: RoutingState("hysteresis", tau_on=3.0, tau_off=1.0,
                                       estimator=EstimatorSpec("conf_power")),
    "bandit": lambda: RoutingState("bandit", ucb_beta=0.5),
}

print(f"{'policy':<12} {'tok/nfe':>8} {'verify':>7} {'prefix':>7} {'localAR':>8} {'globalAR':>9}")
for name, make in policies.items():
    traces = [decode_sequence(model, [j + 1, 2], cfg, "s2d2", make(), np.random.default_rng(j))[1]
              for j in range(10)]
    s = summarize(traces, k=2)
    prefix = "-" if s.mean_accepted_prefix is None else f"{s.mean_accepted_prefix:.2f}"
    print(f"{name:<12} {s.tokens_per_nfe:>8.3f} {s.verify_rate:>7.2f} {prefix:>7} "
          f"{s.local_arness:>8.3f} {s.global_arness:>9.3f}")

# Commit confidence and tokens per step over normalized decode progress.
traces = [decode_sequence(model, [j + 1, 2], cfg, "bd3", rng=np.random.default_rng(j))[1] for j in range(10)]
conf, tps = confidence_curve(traces, n_bins=5)
print("\nprogress bin   mean conf   tokens/step")
for i, (c, t) in enumerate(zip(conf, tps)):
    print(f"{i:>12} {c:>11.3f} {t:>13.2f}")
