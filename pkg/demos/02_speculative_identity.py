"""Accept/resample reproduces the verifier's law; tempering does not.

Run: python3 demos/02_speculative_identity.py
"""
import numpy as np

from selfspec.oracle import mc_committed_token_law, random_dist_pair

rng = np.random.default_rng(0)
draft, ver = random_dist_pair(5, rng)
print("draft   ", np.round(draft, 3))
print("verifier", np.round(ver, 3))

for gamma in (1.0, 2.0, 4.0):
    emp, tv = mc_committed_token_law(draft, ver, gamma, 200_000, rng)
    print(f"gamma={gamma:<4} empirical={np.round(emp, 3)} tv={tv:.4f}")
