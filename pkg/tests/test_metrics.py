import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from selfspec.decode import accept_prob
from selfspec.metrics import (BlockRecord, DecodeTrace, NonpositiveProb, StepRecord, ZeroNfe,
                              commit_events, confidence_curve, global_arness_at_k,
                              local_arness_at_k, local_energy, nfe_speedup, per_token_nfe,
                              summarize)


def make_trace(blocks, verified=None, conf=None):
    """Build a trace from per-block lists of per-step committed positions.

    Each step costs one NFE (two when verified) and each block one cache pass.
    """
    tr, nfe, n = DecodeTrace(prompt_len=1), 0, 0
    for b, steps in enumerate(blocks):
        size = sum(len(s) for s in steps)
        for j, pos in enumerate(steps):
            v = bool(verified and verified[b][j])
            nfe += 2 if v else 1
            c = [conf if conf is not None else 0.5] * len(pos)
            tr.steps.append(StepRecord(
                step=n, block=b, mode="speculative" if v else "diffusion", span_len=len(pos),
                n_masked=size, verified=v, accepted_count=len(pos) if v else 0, rejected_at=None,
                committed=list(pos), tokens=[0] * len(pos), conf=c, ver_conf=c if v else None,
                resampled=[False] * len(pos), score=None, khat=None, nfe_after=nfe))
            n += 1
        nfe += 1
        tr.blocks.append(BlockRecord(b, 1 + b * size, size, len(steps), False, [], [], [], nfe))
    return tr


def ar_trace(n_tokens):
    return make_trace([[[0]]] * n_tokens)


class TestSpeedup:
    def test_identity(self):
        tr = make_trace([[[0, 1], [2, 3]]])
        assert nfe_speedup(tr, tr) == 1.0

    def test_one_step_block(self):
        # 4 tokens: one step + cache = 2 NFE, versus AR at 2 per token
        assert nfe_speedup(make_trace([[[0, 1, 2, 3]]]), ar_trace(4)) == 4.0

    @pytest.mark.parametrize("B", [4, 8, 16])
    def test_fully_accepted_verified_blocks(self, B):
        tr = make_trace([[list(range(B))]] * 3, verified=[[True]] * 3)
        assert tr.nfe == 9
        assert nfe_speedup(tr, ar_trace(3 * B)) == pytest.approx(2 * B / 3)

    def test_lists_pool(self):
        a, b = make_trace([[[0, 1]]]), make_trace([[[0], [1]]])
        assert nfe_speedup([a, b], [a, b]) == 1.0

    def test_zero(self):
        with pytest.raises(ZeroNfe):
            nfe_speedup(DecodeTrace(), ar_trace(2))
        with pytest.raises(ZeroNfe):
            nfe_speedup(ar_trace(2), DecodeTrace())

    def test_per_token(self):
        assert per_token_nfe([ar_trace(5)]) == 2.0
        assert math.isnan(per_token_nfe([DecodeTrace()]))


class TestArness:
    def test_left_to_right_is_one(self):
        tr = make_trace([[[0], [1], [2], [3]]])
        assert local_arness_at_k(tr, 1) == 1.0
        assert global_arness_at_k(tr, 1) == 1.0

    def test_out_of_order_local(self):
        # commits 0, 2, 1: first from -1 to 0 hits; 0->2 needs k>=2; 2->1 goes backward
        tr = make_trace([[[0], [2], [1]]])
        assert local_arness_at_k(tr, 1) == pytest.approx(1 / 3)
        assert local_arness_at_k(tr, 2) == pytest.approx(2 / 3)

    def test_out_of_order_global(self):
        tr = make_trace([[[1], [0]]])
        assert global_arness_at_k(tr, 1) == 0.5
        assert global_arness_at_k(tr, 2) == 1.0

    def test_parallel_step_ordered_by_position(self):
        tr = make_trace([[[2, 0, 1]]])
        assert local_arness_at_k(tr, 1) == 1.0
        assert global_arness_at_k(tr, 1) == 1.0

    def test_resets_per_block(self):
        tr = make_trace([[[0], [1]], [[0], [1]]])
        assert local_arness_at_k(tr, 1) == 1.0

    @given(st.permutations(range(6)), st.integers(6, 12))
    def test_k_at_least_block_size(self, perm, k):
        tr = make_trace([[[p] for p in perm]])
        assert global_arness_at_k(tr, k) == 1.0
        assert 0.0 <= local_arness_at_k(tr, k) <= 1.0

    @given(st.permutations(range(6)), st.integers(1, 5))
    def test_monotone_in_k(self, perm, k):
        tr = make_trace([[[p] for p in perm]])
        assert local_arness_at_k(tr, k) <= local_arness_at_k(tr, k + 1)
        assert global_arness_at_k(tr, k) <= global_arness_at_k(tr, k + 1)

    def test_pooled_vs_mean(self):
        a = make_trace([[[0], [1]]])  # 1.0 over 2 events
        b = make_trace([[[1], [0], [3], [2]]])  # 2/4 hits at k=1 global
        assert global_arness_at_k([a, b], 1) == pytest.approx(4 / 6)
        assert global_arness_at_k([a, b], 1, pooled=False) == pytest.approx(0.75)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            local_arness_at_k(ar_trace(2), 0)
        with pytest.raises(ValueError):
            global_arness_at_k(DecodeTrace(), 1)


class TestEnergy:
    def test_examples(self):
        assert local_energy(0.5, 0.5) == 0.0
        assert local_energy(0.8, 0.4) == pytest.approx(math.log(2))

    def test_nonpositive(self):
        with pytest.raises(NonpositiveProb):
            local_energy(0.0, 0.5)
        with pytest.raises(NonpositiveProb):
            local_energy(0.5, 0.0)

    def test_identity_grid(self):
        g = np.linspace(0.01, 1.0, 100)
        worst = max(abs(min(1.0, math.exp(-local_energy(p, q))) - accept_prob(p, q, 1))
                    for p in g for q in g)
        assert worst <= 1e-12


class TestConfidenceCurve:
    def test_single_bin(self):
        tr = make_trace([[[0, 1], [2]]], conf=0.7)
        conf, tps = confidence_curve(tr, 1)
        assert conf[0] == pytest.approx(0.7)
        assert tps[0] == pytest.approx((2 + 2 + 1) / 3)

    def test_progress_bins(self):
        tr = make_trace([[[0], [1], [2, 3]]])
        conf, tps = confidence_curve(tr, 2)
        np.testing.assert_allclose(tps, [1.0, 2.0])

    def test_empty_bins_nan(self):
        conf, tps = confidence_curve(make_trace([[[0]]]), 4)
        assert not np.isnan(conf[0]) and np.isnan(conf[1:]).all()

    def test_bad_bins(self):
        with pytest.raises(ValueError):
            confidence_curve(ar_trace(1), 0)


class TestSummary:
    def test_counts(self):
        tr = make_trace([[[0, 1, 2], [3]]], verified=[[True, False]])
        s = summarize([tr], k=2)
        assert (s.tokens, s.nfe, s.steps, s.verified_steps) == (4, 4, 2, 1)
        assert s.tokens_per_nfe == 1.0 and s.verify_rate == 0.5
        assert s.mean_accepted_prefix == 3.0 and s.rejection_rate == 0.0
        assert s.acceptance_rate == 1.0

    def test_no_verification(self):
        s = summarize([make_trace([[[0], [1]]])])
        assert s.mean_accepted_prefix is None and s.acceptance_rate is None

    def test_commit_events_cover_block(self):
        tr = make_trace([[[3, 1], [0, 2]]])
        assert [e.position for e in commit_events(tr)] == [1, 3, 0, 2]
