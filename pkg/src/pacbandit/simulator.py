"""Ground-truth bandit environments and logged-history generation.

Random streams
--------------
All randomness comes from numpy's counter-based ``Philox`` bit generator.
Streams are derived from the 64-bit config seed by ``SeedSequence`` hashing
with a spawn key:

* ``(0, i)`` -- replicate ``i`` of the logged history;
* ``(1,)``   -- the reward model when ``reward_means`` is ``"random"``.

A replicate therefore depends only on ``(seed, i)``: replicates can be
generated in any order, on any number of threads, with identical output.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    ContextSpace,
    History,
    Policy,
    RewardModel,
    epsilon_floor_policy,
)
from .errors import FormatError, InfeasibleFloorError, PreconditionError

LOGGING_SCHEMES = ("fixed-uniform", "fixed-policy", "round-robin-of-policies")

_HISTORY_KEY = 0
_MODEL_KEY = 1


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    K: int
    t: int
    epsilon: float
    seed: int = 0
    C: Optional[int] = None
    reward_means: Union[str, list] = "random"
    reward_family: str = "bernoulli"
    logging_scheme: str = "fixed-uniform"
    logging_policies: Optional[list] = None
    context_probs: Optional[list] = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise PreconditionError(f"K must be a positive integer, got {self.K!r}")
        if int(self.t) != self.t or self.t < 1:
            raise PreconditionError(f"t must be a positive integer, got {self.t!r}")
        if self.C is not None and (int(self.C) != self.C or self.C < 1):
            raise PreconditionError(f"C must be a positive integer, got {self.C!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise PreconditionError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if self.epsilon * self.K > 1.0 + 1e-12:
            raise InfeasibleFloorError(
                f"epsilon={self.epsilon!r} exceeds 1/K = {1.0 / self.K!r}"
            )
        if not 0 <= int(self.seed) < 2 ** 64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")
        if self.logging_scheme not in LOGGING_SCHEMES:
            raise PreconditionError(
                f"unknown logging_scheme {self.logging_scheme!r}; choose from {LOGGING_SCHEMES}"
            )
        if self.logging_scheme == "fixed-uniform":
            if self.logging_policies is not None:
                raise PreconditionError("fixed-uniform logging takes no logging_policies")
        else:
            pols = self.logging_policies
            if not pols:
                raise PreconditionError(f"{self.logging_scheme} needs logging_policies")
            if self.logging_scheme == "fixed-policy" and len(pols) != 1:
                raise PreconditionError("fixed-policy needs exactly one logging policy")
        if isinstance(self.reward_means, str) and self.reward_means != "random":
            raise PreconditionError("reward_means must be a matrix/vector or 'random'")

    @property
    def contextual(self) -> bool:
        return self.C is not None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise FormatError(f"unknown config field(s) {sorted(unknown)}")
        for name in ("K", "t", "epsilon"):
            if name not in d:
                raise FormatError("missing field", f"field {name!r}")
        for name in ("K", "t", "seed", "C"):
            v = d.get(name)
            if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
                raise FormatError(f"expected integer, got {v!r}", f"field {name!r}")
        eps = d["epsilon"]
        if isinstance(eps, bool) or not isinstance(eps, (int, float)):
            raise FormatError(f"expected number, got {eps!r}", "field 'epsilon'")
        return cls(**d)


def load_config(path) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fp:
            d = json.load(fp)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", f"{path}: line {exc.lineno}") from None
    if not isinstance(d, dict):
        raise FormatError("config must be a JSON object", str(path))
    return SimConfig.from_dict(d)


def reward_model(config: SimConfig) -> RewardModel:
    shape = (config.C, config.K) if config.contextual else (config.K,)
    if isinstance(config.reward_means, str):
        means = make_rng(config.seed, _MODEL_KEY).random(shape)
    else:
        means = np.asarray(config.reward_means, dtype=float)
        if means.shape != shape:
            raise PreconditionError(f"reward_means has shape {means.shape}, expected {shape}")
    ctx = None
    if config.contextual:
        probs = config.context_probs
        ctx = ContextSpace.uniform(config.C) if probs is None else ContextSpace(np.asarray(probs, dtype=float))
        if ctx.C != config.C:
            raise PreconditionError("context_probs length differs from C")
    elif config.context_probs is not None:
        raise PreconditionError("context_probs given for a multi-armed config")
    return RewardModel(means, config.reward_family, ctx)


def logging_policies(config: SimConfig) -> np.ndarray:
    """Floored logging policies as an ``(L, K)`` or ``(L, C, K)`` array.

    Every supplied policy goes through :func:`epsilon_floor_policy`; the
    uniform policy is a fixed point of that map.
    """
    if config.logging_scheme == "fixed-uniform":
        raw = [Policy.uniform(config.K, config.C)]
    else:
        raw = [Policy(np.asarray(p, dtype=float)) for p in config.logging_policies]
    out = []
    for pol in raw:
        expected = (config.C, config.K) if config.contextual else (config.K,)
        if pol.contextual and not config.contextual:
            raise PreconditionError("contextual logging policy for a multi-armed config")
        probs = pol.probs
        if config.contextual and not pol.contextual:
            probs = np.broadcast_to(probs, expected)
        if probs.shape != expected:
            raise PreconditionError(f"logging policy shape {probs.shape}, expected {expected}")
        out.append(epsilon_floor_policy(Policy(probs), config.epsilon).probs)
    return np.stack(out)


def _sample(config: SimConfig, model: RewardModel, policies: np.ndarray, rng) -> History:
    t, K = config.t, config.K
    contexts = None
    if config.contextual:
        contexts = rng.choice(config.C, size=t, p=model.contexts.probs)
    u = rng.random(t)
    idx = np.arange(t) % policies.shape[0]
    rows = policies[idx] if contexts is None else policies[idx, contexts]
    cdf = np.cumsum(rows, axis=1)
    # inverse cdf; the last action absorbs any rounding shortfall of cdf[-1]
    actions = (u[:, None] >= cdf[:, :-1]).sum(axis=1)
    probs = rows[np.arange(t), actions]
    rewards = model.sample(actions, contexts, rng)
    return History(
        actions=actions,
        rewards=rewards,
        logging_probs=probs,
        epsilon=config.epsilon,
        K=K,
        contexts=contexts,
        C=config.C,
    )


def generate_history(config: SimConfig, replicate: int = 0) -> Tuple[History, RewardModel]:
    """Logged history for substream ``replicate`` plus the ground-truth model."""
    model = reward_model(config)
    policies = logging_policies(config)
    return _sample(config, model, policies, make_rng(config.seed, _HISTORY_KEY, replicate)), model


def replicate(config: SimConfig, m: int, workers: int = 1, start: int = 0) -> Iterator[History]:
    """Yield ``m`` independent histories, replicate indices ``start .. start+m-1``.

    Output order and content do not depend on ``workers``.
    """
    if m < 1:
        raise PreconditionError(f"m must be at least 1, got {m!r}")
    model = reward_model(config)
    policies = logging_policies(config)

    def one(i):
        return _sample(config, model, policies, make_rng(config.seed, _HISTORY_KEY, i))

    indices = range(start, start + m)
    if workers <= 1:
        for i in indices:
            yield one(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(one, indices)
