import json
from pathlib import Path

import numpy as np
import pytest

from pacbandit.core import history_to_jsonl
from pacbandit.errors import FormatError, InfeasibleFloorError, PreconditionError
from pacbandit.estimators import is_estimates
from pacbandit.simulator import (
    SimConfig,
    generate_history,
    load_config,
    logging_policies,
    make_rng,
    replicate,
    reward_model,
)

DATA = Path(__file__).parent / "data"


def test_single_action():
    h, _ = generate_history(SimConfig(K=1, t=50, epsilon=1.0, seed=1))
    assert np.all(h.actions == 0) and np.all(h.logging_probs == 1.0)


def test_golden_history():
    config = load_config(DATA / "golden_config.json")
    h, model = generate_history(config)
    assert history_to_jsonl(h) == (DATA / "golden_history.jsonl").read_text()
    assert model.to_dict() == json.loads((DATA / "golden_model.json").read_text())


def test_uniform_action_frequencies():
    t, K = 10 ** 5, 4
    h, _ = generate_history(SimConfig(K=K, t=t, epsilon=0.1, seed=9))
    freq = np.bincount(h.actions, minlength=K) / t
    assert np.all(np.abs(freq - 1 / K) <= 4 * np.sqrt(1 / (4 * t)))


def test_replicate_one_equals_substream_zero():
    config = SimConfig(K=3, t=20, epsilon=0.2, seed=42)
    (only,) = list(replicate(config, 1))
    assert history_to_jsonl(only) == history_to_jsonl(generate_history(config, 0)[0])


def test_substreams_independent_of_order():
    config = SimConfig(K=3, t=30, epsilon=0.2, seed=42)
    forward = [history_to_jsonl(h) for h in replicate(config, 5)]
    backward = [history_to_jsonl(generate_history(config, i)[0]) for i in reversed(range(5))]
    assert forward == backward[::-1]
    assert len(set(forward)) == 5
    threaded = [history_to_jsonl(h) for h in replicate(config, 5, workers=3)]
    assert threaded == forward


def test_determinism_and_seed_sensitivity():
    a = SimConfig(K=5, t=100, epsilon=0.1, seed=123)
    assert history_to_jsonl(generate_history(a)[0]) == history_to_jsonl(generate_history(a)[0])
    b = SimConfig(K=5, t=100, epsilon=0.1, seed=124)
    assert history_to_jsonl(generate_history(a)[0]) != history_to_jsonl(generate_history(b)[0])


def test_make_rng_is_philox():
    assert isinstance(make_rng(1, 0, 0).bit_generator, np.random.Philox)


def test_logging_prob_floor_respected():
    config = SimConfig(
        K=4, t=5000, epsilon=0.05, seed=3, logging_scheme="round-robin-of-policies",
        logging_policies=[[1, 0, 0, 0], [0, 0, 0, 1], [0.7, 0.3, 0, 0]],
    )
    h, _ = generate_history(config)
    assert h.logging_probs.min() >= config.epsilon
    pols = logging_policies(config)
    # round robin: step n uses policy n mod 3
    idx = np.arange(h.t) % 3
    np.testing.assert_array_equal(h.logging_probs, pols[idx, h.actions])


def test_random_means_fixed_across_replicates():
    config = SimConfig(K=5, t=10, epsilon=0.1, seed=77)
    m1 = reward_model(config).means
    assert np.all((m1 >= 0) & (m1 <= 1))
    np.testing.assert_array_equal(m1, generate_history(config, 17)[1].means)


def test_contextual_generation():
    config = SimConfig(K=3, C=4, t=20000, epsilon=0.1, seed=8, context_probs=[0.1, 0.2, 0.3, 0.4],
                       logging_scheme="fixed-policy",
                       logging_policies=[[[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.2, 0.3, 0.5]]])
    h, model = generate_history(config)
    assert h.contextual and h.C == 4
    freq = np.bincount(h.contexts, minlength=4) / h.t
    assert np.all(np.abs(freq - [0.1, 0.2, 0.3, 0.4]) <= 4 * np.sqrt(0.25 / h.t))
    pols = logging_policies(config)
    np.testing.assert_array_equal(h.logging_probs, pols[0, h.contexts, h.actions])
    assert model.contexts.probs.tolist() == [0.1, 0.2, 0.3, 0.4]


def test_is_estimate_clt_over_replicates():
    config = SimConfig(K=3, t=100, epsilon=0.1, seed=2)
    model = reward_model(config)
    est = np.array([is_estimates(h) for h in replicate(config, 1000)])
    se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - model.means) <= 4 * se)


@pytest.mark.parametrize(
    "kwargs,exc",
    [
        (dict(K=4, t=10, epsilon=0.3), InfeasibleFloorError),
        (dict(K=2, t=0, epsilon=0.1), PreconditionError),
        (dict(K=2, t=10, epsilon=0.1, reward_means=[0.5, 1.5]), PreconditionError),
        (dict(K=2, t=10, epsilon=0.1, logging_scheme="fixed-policy"), PreconditionError),
        (dict(K=2, t=10, epsilon=0.1, logging_scheme="bogus"), PreconditionError),
        (dict(K=2, t=10, epsilon=0.1, seed=-1), PreconditionError),
    ],
)
def test_config_validation(kwargs, exc):
    with pytest.raises(exc):
        config = SimConfig(**kwargs)
        generate_history(config)


def test_config_from_dict_diagnostics(tmp_path):
    with pytest.raises(FormatError, match="field 'K'"):
        SimConfig.from_dict({"K": "3", "t": 10, "epsilon": 0.1})
    with pytest.raises(FormatError, match="unknown"):
        SimConfig.from_dict({"K": 3, "t": 10, "epsilon": 0.1, "bogus": 1})
    bad = tmp_path / "c.json"
    bad.write_text("{oops")
    with pytest.raises(FormatError, match="line 1"):
        load_config(bad)
