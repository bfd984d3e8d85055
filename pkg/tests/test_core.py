import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacbandit.core import (
    ContextSpace,
    History,
    LoggedStep,
    Policy,
    RewardModel,
    dump_history,
    epsilon_floor_policy,
    history_to_jsonl,
    kl_divergence,
    parse_history,
    true_expected_reward,
)
from pacbandit.errors import DimensionError, FormatError, InfeasibleFloorError, PreconditionError


def simplex(K):
    return (
        st.lists(st.floats(0.0, 1.0), min_size=K, max_size=K)
        .filter(lambda v: sum(v) > 1e-3)
        .map(lambda v: np.asarray(v) / np.sum(v))
    )


# --- kl ---------------------------------------------------------------------------

def test_kl_identity():
    u = np.full(4, 0.25)
    assert kl_divergence(u, u) == 0.0


def test_kl_point_mass_vs_uniform():
    assert kl_divergence([1, 0, 0, 0], np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-15)


def test_kl_absolute_continuity_violation():
    assert kl_divergence([0.5, 0.5, 0.0], [0.0, 0.5, 0.5]) == math.inf


def test_kl_tiny_mass_outside_support_is_infinite():
    assert kl_divergence([2.22507386e-313, 1.0], [0.0, 1.0]) == math.inf


def test_kl_dimension_mismatch():
    with pytest.raises(DimensionError):
        kl_divergence([0.5, 0.5], [1 / 3] * 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6).flatmap(lambda K: st.tuples(simplex(K), simplex(K))))
def test_kl_nonnegative_and_zero_iff_equal(pq):
    p, q = pq
    kl = kl_divergence(p, q)
    assert kl >= 0
    if np.any((p > 0) & (q == 0)):
        assert kl == math.inf
    elif np.allclose(p, q, atol=1e-12):
        assert kl < 1e-12
    elif np.all(q > 0) and np.max(np.abs(p - q)) > 1e-3:
        assert kl > 0


# --- true_expected_reward ------------------------------------------------------------

def test_true_reward_point_mass():
    model = RewardModel([0.3, 0.8])
    assert true_expected_reward(Policy.point_mass(2, 1), model) == 0.8


def test_true_reward_uniform():
    assert true_expected_reward([0.5, 0.5], RewardModel([0.3, 0.8])) == pytest.approx(0.55, abs=1e-15)


def test_true_reward_contextual_table():
    model = RewardModel([[0.2, 0.9], [0.7, 0.1]], contexts=ContextSpace([0.5, 0.5]))
    best = Policy([[0.0, 1.0], [1.0, 0.0]])
    # hand enumeration: 0.5*0.9 + 0.5*0.7
    assert true_expected_reward(best, model) == pytest.approx(0.8, abs=1e-15)


def test_true_reward_dimension_mismatch():
    with pytest.raises(DimensionError):
        true_expected_reward([1 / 3] * 3, RewardModel([0.3, 0.8]))


@settings(max_examples=100, deadline=None)
@given(
    st.integers(2, 6).flatmap(
        lambda K: st.tuples(simplex(K), simplex(K), st.lists(st.floats(0, 1), min_size=K, max_size=K))
    ),
    st.floats(0, 1),
)
def test_true_reward_linear_in_policy(pqm, alpha):
    p, q, means = pqm
    model = RewardModel(means)
    mix = alpha * p + (1 - alpha) * q
    mix = mix / mix.sum()
    lhs = true_expected_reward(mix, model)
    rhs = alpha * true_expected_reward(p, model) + (1 - alpha) * true_expected_reward(q, model)
    assert abs(lhs - rhs) <= 1e-12


# --- epsilon floor -------------------------------------------------------------------

def test_floor_point_mass():
    np.testing.assert_allclose(epsilon_floor_policy([1.0, 0.0], 0.1).probs, [0.9, 0.1], atol=1e-15)


@pytest.mark.parametrize("K,eps", [(2, 0.5), (3, 0.1), (5, 0.2), (10, 0.01)])
def test_floor_uniform_fixed_point(K, eps):
    np.testing.assert_allclose(epsilon_floor_policy(Policy.uniform(K), eps).probs, np.full(K, 1 / K), atol=1e-15)


def test_floor_infeasible():
    with pytest.raises(InfeasibleFloorError):
        epsilon_floor_policy([1, 0, 0, 0], 0.3)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda K: st.tuples(simplex(K), st.floats(1e-6, 1.0 / K))))
def test_floor_properties(pe):
    p, eps = pe
    out = epsilon_floor_policy(p, eps).probs
    assert out.min() >= eps
    assert abs(out.sum() - 1.0) <= 1e-12
    assert int(np.argmax(out)) == int(np.argmax(p))


# --- types -----------------------------------------------------------------------------

def test_policy_rejects_non_stochastic():
    with pytest.raises(PreconditionError):
        Policy([0.5, 0.6])
    with pytest.raises(PreconditionError):
        Policy([1.2, -0.2])


def test_context_space_validation():
    with pytest.raises(PreconditionError):
        ContextSpace([0.5, 0.4])


def test_logged_step_ranges():
    with pytest.raises(PreconditionError):
        LoggedStep(0, 1.5, 0.5)
    with pytest.raises(PreconditionError):
        LoggedStep(0, 0.5, 0.0)


def test_history_enforces_epsilon():
    with pytest.raises(PreconditionError, match="below the declared epsilon"):
        History.from_steps([LoggedStep(0, 1.0, 0.05)], epsilon=0.1, K=2)


def test_history_is_immutable():
    h = History.from_steps([LoggedStep(0, 1.0, 0.5)], epsilon=0.5, K=2)
    with pytest.raises(ValueError):
        h.rewards[0] = 0.0


def test_reward_model_bounds():
    with pytest.raises(PreconditionError):
        RewardModel([0.2, 1.2])


# --- JSONL ----------------------------------------------------------------------------

def test_jsonl_round_trip_multi_armed():
    h = History.from_steps(
        [LoggedStep(0, 1.0, 0.25), LoggedStep(0, 0.0, 0.25), LoggedStep(1, 1.0, 0.75)], 0.25, 2
    )
    text = history_to_jsonl(h)
    buf = io.StringIO()
    dump_history(h, buf)
    assert buf.getvalue() == text
    back = parse_history(text.splitlines())
    assert history_to_jsonl(back) == text
    assert text.splitlines()[0] == '{"epsilon": 0.25, "K": 2, "C": null}'
    assert text.splitlines()[1] == '{"n": 1, "action": 0, "context": null, "reward": 1.0, "logging_prob": 0.25}'


def test_jsonl_round_trip_contextual():
    h = History.from_steps(
        [LoggedStep(0, 1.0, 0.5, 1), LoggedStep(1, 0.0, 0.5, 0)], 0.5, 2, C=3
    )
    back = parse_history(history_to_jsonl(h).splitlines())
    np.testing.assert_array_equal(back.contexts, [1, 0])
    assert back.C == 3


@pytest.mark.parametrize(
    "lines,where",
    [
        (['{"epsilon": 0.5, "K": 2, "C": null}', "{not json"], "line 2"),
        (['{"epsilon": 0.5, "K": 2, "C": null}', '{"n": 1, "action": 0, "context": null, "logging_prob": 0.5}'], "field 'reward'"),
        (['{"epsilon": 0.5, "K": 2, "C": null}', '{"n": 1, "action": "0", "context": null, "reward": 1, "logging_prob": 0.5}'], "field 'action'"),
        (['{"epsilon": 0.5, "K": 2, "C": null}', '{"n": 2, "action": 0, "context": null, "reward": 1, "logging_prob": 0.5}'], "field 'n'"),
        (['{"epsilon": 0.5, "K": 2, "C": null}', '{"n": 1, "action": 0, "context": null, "reward": 1.5, "logging_prob": 0.5}'], "line 2"),
        (['{"epsilon": 0.5, "K": 2, "C": null}', '{"n": 1, "action": 0, "context": null, "reward": 1, "logging_prob": 0.25}'], "field 'logging_prob'"),
        (['{"epsilon": 0.5, "K": 2}'], "field 'C'"),
        ([], None),
    ],
)
def test_jsonl_diagnostics(lines, where):
    with pytest.raises(FormatError) as info:
        parse_history(lines)
    if where:
        assert where in str(info.value)
