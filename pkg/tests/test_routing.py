import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfspec.oracle import brute_force_expected_prefix
from selfspec.routing import (EstimatorSpec, RoutingState, acceptance_probs, bandit_select,
                              bandit_update, context_bucket, do_verify, expected_prefix,
                              verify_score)


def onehot(V, i):
    d = np.zeros(V)
    d[i] = 1.0
    return d


class TestEstimators:
    def test_soft_entropy_onehot(self):
        a = acceptance_probs(EstimatorSpec("soft_entropy", beta=1.0), [onehot(8, 2)], [1.0])
        assert a.tolist() == [1.0]

    def test_hard_margin(self):
        d1 = np.array([0.5, 0.45, 0.05])  # margin 0.05
        d2 = np.array([0.6, 0.3, 0.1])  # margin 0.3
        a = acceptance_probs(EstimatorSpec("hard_margin", tau_margin=0.1), [d1, d2], [0.5, 0.6])
        assert a.tolist() == [0.0, 1.0]

    def test_renyi2_uniform(self):
        V = 10
        a = acceptance_probs(EstimatorSpec("renyi2"), [np.full(V, 1 / V)], [0.1])
        assert a[0] == pytest.approx(1 / V)

    def test_conf_power(self):
        a = acceptance_probs(EstimatorSpec("conf_power", gamma_conf=2.0), [None, None], [0.5, 0.9])
        np.testing.assert_allclose(a, [0.25, 0.81])

    def test_hard_entropy(self):
        a = acceptance_probs(EstimatorSpec("hard_entropy", tau_ent=0.5),
                             [onehot(4, 0), np.full(4, 0.25)], [1.0, 0.25])
        assert a.tolist() == [1.0, 0.0]

    def test_random_needs_rng(self):
        with pytest.raises(ValueError):
            acceptance_probs(EstimatorSpec("random"), [onehot(4, 0)], [1.0])
        a = acceptance_probs(EstimatorSpec("random"), [onehot(4, 0)] * 3, [1.0] * 3,
                             np.random.default_rng(0))
        assert a.shape == (3,) and np.all((a >= 0) & (a <= 1))

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            EstimatorSpec("oracle")
        with pytest.raises(ValueError):
            EstimatorSpec("hard_margin", tau_margin=1.5)

    @settings(max_examples=50)
    @given(st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_all_in_unit_interval(self, V, seed):
        rng = np.random.default_rng(seed)
        dists = rng.dirichlet(np.full(V, 0.3), size=4)
        confs = dists.max(axis=1)
        for kind in ("random", "soft_entropy", "conf_power", "renyi2", "hard_entropy", "hard_margin"):
            a = acceptance_probs(EstimatorSpec(kind), dists, confs, rng)
            assert np.all((a >= 0) & (a <= 1)), kind


class TestExpectedPrefix:
    def test_examples(self):
        assert expected_prefix([1, 1, 1]) == 3.0
        assert expected_prefix([0.5, 0.5]) == 0.75
        assert expected_prefix([]) == 0.0

    @given(st.lists(st.floats(0, 1), max_size=12))
    def test_matches_enumeration(self, alpha):
        assert expected_prefix(alpha) == pytest.approx(brute_force_expected_prefix(alpha), abs=1e-12)


class TestScore:
    def test_examples(self):
        assert verify_score(2.5, RoutingState(score_mode="static", cost=1.0)) == 1.5
        assert verify_score(2.5, RoutingState(score_mode="dynamic", cost=1.0), n_hi=4) == -1.5
        for mode in ("static", "dynamic"):
            assert verify_score(2.5, RoutingState(score_mode=mode, cost=0.0), n_hi=7) == 2.5


class TestPolicies:
    def test_min_span(self):
        st_ = RoutingState("min_span", tau_span=2)
        assert do_verify(st_, 2) is True
        assert do_verify(st_, 1) is False

    def test_score_threshold(self):
        st_ = RoutingState("score_threshold", tau_score=0.5)
        assert do_verify(st_, 3, s=0.5)
        assert not do_verify(st_, 3, s=0.49)
        with pytest.raises(ValueError):
            do_verify(st_, 3)

    def test_hysteresis_turns_off(self):
        st_ = RoutingState("hysteresis", tau_on=1.0, tau_off=-5.0, h_on=True)
        assert do_verify(st_, 4, s=-6.0) is False
        assert st_.h_on is False

    def test_hysteresis_holds_between(self):
        st_ = RoutingState("hysteresis", tau_on=1.0, tau_off=-5.0, h_on=False)
        assert do_verify(st_, 4, s=-2.0) is False
        assert st_.h_on is False
        assert do_verify(st_, 4, s=1.0) is True
        assert do_verify(st_, 4, s=-4.9) is True

    def test_hysteresis_no_chatter(self):
        rng = np.random.default_rng(0)
        for h0 in (True, False):
            st_ = RoutingState("hysteresis", tau_on=1.0, tau_off=-5.0, h_on=h0)
            out = [do_verify(st_, 3, s=float(s)) for s in rng.uniform(-4.99, 0.99, 1000)]
            assert len(set(out)) == 1 and out[0] is h0

    def test_invalid_thresholds(self):
        with pytest.raises(ValueError):
            RoutingState("hysteresis", tau_on=-6.0, tau_off=-5.0)
        with pytest.raises(ValueError):
            RoutingState("always")


class TestBandit:
    def test_untried_tie_goes_to_verify(self):
        st_ = RoutingState("bandit")
        assert bandit_select(st_, (0, 0, 0)) == 1
        assert st_.t == 2

    def test_forced_exploration(self):
        st_ = RoutingState("bandit")
        st_.counts[(0, "b")], st_.means[(0, "b")] = 10, 2.0
        assert bandit_select(st_, "b") == 1

    def test_pure_exploitation(self):
        st_ = RoutingState("bandit", ucb_beta=0.0)
        for a, mu in ((0, 1.0), (1, 2.0)):
            st_.counts[(a, "b")], st_.means[(a, "b")] = 5, mu
        assert bandit_select(st_, "b") == 1
        st_.means[(0, "b")] = 3.0
        assert bandit_select(st_, "b") == 0

    def test_rewards(self):
        st_ = RoutingState("bandit")
        assert bandit_update(st_, "b", 1, 3, verified=True) == 1.5
        assert bandit_update(st_, "b", 0, 1, verified=False) == 1.0

    def test_running_mean(self):
        st_ = RoutingState("bandit")
        bandit_update(st_, "b", 0, 1, False)
        bandit_update(st_, "b", 0, 3, False)
        assert st_.means[(0, "b")] == 2.0 and st_.counts[(0, "b")] == 2

    def test_do_verify_uses_bandit(self):
        st_ = RoutingState("bandit")
        assert do_verify(st_, 3, bucket=(0, 0, 0)) is True

    def test_converges_to_better_arm(self):
        rng = np.random.default_rng(3)
        st_ = RoutingState("bandit", ucb_beta=0.5)
        picks = []
        for _ in range(10_000):
            a = bandit_select(st_, "b")
            r = (2.0 if a == 1 else 1.0) + rng.normal(0, 0.3)
            key = (a, "b")
            n = st_.counts.get(key, 0) + 1
            st_.counts[key] = n
            st_.means[key] = st_.means.get(key, 0.0) + (r - st_.means.get(key, 0.0)) / n
            picks.append(a)
        assert np.mean(picks) >= 0.95


class TestBucket:
    def test_examples(self):
        assert context_bucket(8, 8, 0.0, 0.9, (2, 2, 2)) == (1, 0, 1)
        assert context_bucket(5, 8, 0.7, 0.3, (1, 1, 1)) == (0, 0, 0)
        assert context_bucket(1, 8, 0.5, 0.5, (2, 2, 2))[0] == 0

    def test_midpoint_boundary(self):
        # equal-width bins on [1, 8] split at 4.5
        assert context_bucket(4, 8, 0, 0, (2, 1, 1))[0] == 0
        assert context_bucket(5, 8, 0, 0, (2, 1, 1))[0] == 1

    @given(st.integers(1, 32), st.floats(0, 1), st.floats(0, 1), st.tuples(*[st.integers(1, 5)] * 3))
    def test_in_range(self, B, prog, ent, bins):
        for L in (1, B):
            b = context_bucket(L, B, prog, ent, bins)
            assert all(0 <= x < n for x, n in zip(b, bins))
