import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacbandit.core import History, LoggedStep, Policy, RewardModel, epsilon_floor_policy
from pacbandit.errors import DimensionError, UnseenContextError
from pacbandit.estimators import (
    conditional_variance_step,
    context_counts,
    contextual_is_estimate,
    contextual_is_estimates,
    contextual_policy_estimate,
    estimate_report,
    is_estimate_action,
    is_estimate_policy,
    is_estimates,
    martingale_difference,
    martingale_difference_mean,
)
from pacbandit.simulator import SimConfig, replicate, reward_model


def mab(steps, eps, K=2):
    return History.from_steps([LoggedStep(*s) for s in steps], eps, K)


THREE = [(0, 1.0, 0.25), (0, 0.0, 0.25), (1, 1.0, 0.75)]


def test_single_step_hit():
    assert is_estimate_action(0, mab([(0, 1.0, 0.5)], 0.5)) == 2.0


def test_single_step_miss():
    assert is_estimate_action(0, mab([(1, 1.0, 0.5)], 0.5)) == 0.0


def test_three_step_hand_sum():
    h = mab(THREE, 0.25)
    assert is_estimate_action(0, h) == pytest.approx(4 / 3, abs=1e-15)
    assert is_estimate_action(1, h) == pytest.approx(4 / 9, abs=1e-15)


def test_policy_estimate_point_mass():
    h = mab(THREE, 0.25)
    assert is_estimate_policy([0.0, 1.0], h) == is_estimate_action(1, h)


def test_policy_estimate_uniform():
    assert is_estimate_policy([0.5, 0.5], mab([(0, 1.0, 0.5)], 0.5)) == 1.0


def test_policy_estimate_mixture():
    # 0.25 * 4/3 + 0.75 * 4/9
    assert is_estimate_policy([0.25, 0.75], mab(THREE, 0.25)) == pytest.approx(2 / 3, abs=1e-15)


def test_multi_armed_estimator_rejects_contextual():
    h = History.from_steps([LoggedStep(0, 1.0, 0.5, 0)], 0.5, 2, C=1)
    with pytest.raises(DimensionError):
        is_estimate_action(0, h)


def test_policy_dimension_mismatch():
    with pytest.raises(DimensionError):
        is_estimate_policy([1 / 3] * 3, mab(THREE, 0.25))


def test_empty_history():
    from pacbandit.errors import PreconditionError

    with pytest.raises(PreconditionError):
        is_estimates(History.from_steps([], 0.5, 2))


# --- contextual ---------------------------------------------------------------------

def ctx(steps, eps=0.25, K=2, C=2):
    return History.from_steps([LoggedStep(a, r, p, x) for a, x, r, p in steps], eps, K, C)


def test_contextual_single_match():
    assert contextual_is_estimate(0, 1, ctx([(0, 1, 1.0, 0.5)])) == 2.0


def test_contextual_unseen():
    with pytest.raises(UnseenContextError):
        contextual_is_estimate(0, 0, ctx([(0, 1, 1.0, 0.5)]))


def test_contextual_hand_sum():
    h = ctx([(0, 0, 1.0, 0.5), (1, 0, 1.0, 0.5), (0, 1, 1.0, 0.25)])
    assert contextual_is_estimate(0, 0, h) == 1.0
    est, counts = contextual_is_estimates(h)
    np.testing.assert_array_equal(counts, [2, 1])
    np.testing.assert_allclose(est, [[1.0, 1.0], [4.0, 0.0]])


def test_contextual_policy_estimate_skips_unseen():
    h = ctx([(0, 1, 1.0, 0.5), (1, 1, 0.5, 0.5)], C=3)
    value, unseen = contextual_policy_estimate(Policy.uniform(2, 3), h)
    assert unseen == [0, 2]
    # n(1)/t = 1; per-context = 0.5*1.0 + 0.5*0.5
    assert value == pytest.approx(0.75)
    rep = estimate_report(h).to_dict()
    assert rep["per_action"][0] is None and rep["per_action"][1] == [1.0, 0.5]
    json.dumps(rep, allow_nan=False)


def test_contextual_conditional_unbiasedness():
    rng = np.random.default_rng(11)
    K, C, t, M = 3, 4, 60, 4000
    means = rng.random((C, K))
    logging = np.array([epsilon_floor_policy(rng.dirichlet(np.ones(K)), 0.1).probs for _ in range(C)])
    contexts = rng.integers(0, C - 1, size=t)  # context C-1 never appears
    counts = np.bincount(contexts, minlength=C)
    draws = np.empty((M, C, K))
    for m in range(M):
        u = rng.random(t)
        actions = (u[:, None] >= np.cumsum(logging[contexts], axis=1)[:, :-1]).sum(axis=1)
        rewards = (rng.random(t) < means[contexts, actions]).astype(float)
        h = History(actions, rewards, logging[contexts, actions], 0.1, K, contexts, C)
        draws[m] = contextual_is_estimates(h)[0]
    seen = counts > 0
    mean = draws[:, seen].mean(axis=0)
    sd = draws[:, seen].std(axis=0, ddof=1)
    assert np.all(np.abs(mean - means[seen]) <= 4 * sd / np.sqrt(M))
    assert np.all(np.isnan(draws[:, ~seen]))


# --- martingale -------------------------------------------------------------------

def test_martingale_difference_examples():
    model = RewardModel([0.6, 0.3])
    assert martingale_difference(0, LoggedStep(0, 1.0, 0.5), model) == pytest.approx(1.4)
    assert martingale_difference(0, LoggedStep(1, 1.0, 0.5), model) == pytest.approx(-0.6)


def test_conditional_variance_example():
    # 0.5*(0.4*0.36 + 0.6*1.96) + 0.5*0.36
    assert conditional_variance_step(0, [0.5, 0.5], RewardModel([0.6, 0.3])) == pytest.approx(0.84, abs=1e-14)


def test_conditional_variance_zero_rewards():
    model = RewardModel([0.0, 0.0, 0.0], family="deterministic")
    for a in range(3):
        assert conditional_variance_step(a, [0.2, 0.3, 0.5], model) == 0.0


def _enumerated_mean(a, logging, means):
    # independent enumeration: all (action, reward in {0,1}) outcomes
    total = 0.0
    for b, r in itertools.product(range(len(means)), (0.0, 1.0)):
        p = logging[b] * (means[b] if r else 1.0 - means[b])
        total += p * ((r / logging[b] if b == a else 0.0) - means[a])
    return total


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda K: st.tuples(
    st.just(K),
    st.lists(st.floats(0.0, 1.0), min_size=K, max_size=K),
    st.lists(st.floats(0.01, 1.0), min_size=K, max_size=K),
    st.floats(0.0, 1.0),
)))
def test_martingale_mean_zero_and_variance(case):
    K, means, raw, eps_frac = case
    eps = eps_frac / K if eps_frac > 0 else 1e-3 / K
    logging = epsilon_floor_policy(np.asarray(raw) / np.sum(raw), max(eps, 1e-6)).probs
    model = RewardModel(means)
    for a in range(K):
        assert abs(martingale_difference_mean(a, logging, model)) <= 1e-12
        assert abs(_enumerated_mean(a, logging, means)) <= 1e-12
        var = conditional_variance_step(a, logging, model)
        # Bernoulli closed form: E[(1{a} R / p)^2] - rbar^2 = rbar/p - rbar^2
        assert var == pytest.approx(means[a] / logging[a] - means[a] ** 2, rel=1e-10, abs=1e-12)
        assert var <= 2.0 / logging.min()


def test_variance_bound_policy_sum():
    rng = np.random.default_rng(3)
    for _ in range(200):
        K = int(rng.integers(2, 8))
        eps = float(rng.uniform(0.001, 1.0 / K))
        t = int(rng.integers(1, 50))
        model = RewardModel(rng.random(K))
        pi = rng.dirichlet(np.ones(K))
        logs = [epsilon_floor_policy(rng.dirichlet(np.ones(K)), eps).probs for _ in range(t)]
        total = sum(
            pi[a] * sum(conditional_variance_step(a, lp, model) for lp in logs) for a in range(K)
        )
        assert total <= 2 * t / eps


def test_unbiasedness_and_range_small():
    config = SimConfig(K=4, t=50, epsilon=0.1, seed=5, logging_scheme="round-robin-of-policies",
                       logging_policies=[[1, 0, 0, 0], [0.1, 0.2, 0.3, 0.4]])
    model = reward_model(config)
    est = np.array([is_estimates(h) for h in replicate(config, 3000)])
    assert est.min() >= 0 and est.max() <= 1 / config.epsilon
    M = est.shape[0]
    assert np.all(np.abs(est.mean(0) - model.means) <= 4 * est.std(0, ddof=1) / np.sqrt(M))


def test_report_multi_armed():
    h = mab(THREE, 0.25)
    rep = estimate_report(h, [0.25, 0.75])
    assert rep.policy_value == pytest.approx(2 / 3)
    d = rep.to_dict()
    assert d["t"] == 3 and d["epsilon"] == 0.25 and d["context_counts"] is None
    assert context_counts(ctx([(0, 1, 1.0, 0.5)])).tolist() == [0, 1]
