"""Domain types shared by every module: spaces, policies, logged histories,
reward models, relative entropy and the epsilon floor.

Actions are integers ``0..K-1`` and contexts integers ``0..C-1``.  A contextual
policy is a ``C x K`` row-stochastic matrix (row = context).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionError,
    FormatError,
    InfeasibleFloorError,
    PreconditionError,
)

PROB_ATOL = 1e-12

ArrayLike = Union[Sequence[float], np.ndarray]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_stochastic(probs: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(probs)):
        raise PreconditionError(f"{what} contains non-finite entries")
    if np.any(probs < 0):
        raise PreconditionError(f"{what} has negative entries")
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > PROB_ATOL):
        raise PreconditionError(f"{what} rows must sum to 1 (got {sums.tolist()})")


@dataclass(frozen=True)
class ActionSpace:
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise PreconditionError(f"K must be a positive integer, got {self.K!r}")


@dataclass(frozen=True)
class ContextSpace:
    """Finite context set with its (ground-truth) sampling distribution."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DimensionError("context distribution must be a non-empty vector")
        _check_stochastic(p, "context distribution")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def C(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, C: int) -> "ContextSpace":
        return cls(np.full(C, 1.0 / C))


@dataclass(frozen=True)
class Policy:
    """A distribution over K actions, or one such distribution per context."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim not in (1, 2) or p.shape[-1] < 1:
            raise DimensionError(f"policy must be a vector or a matrix, got shape {p.shape}")
        _check_stochastic(p, "policy")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def K(self) -> int:
        return self.probs.shape[-1]

    @property
    def contextual(self) -> bool:
        return self.probs.ndim == 2

    @property
    def C(self) -> Optional[int]:
        return self.probs.shape[0] if self.contextual else None

    def row(self, context: Optional[int] = None) -> np.ndarray:
        if not self.contextual:
            return self.probs
        if context is None:
            raise DimensionError("contextual policy needs a context index")
        return self.probs[context]

    @classmethod
    def uniform(cls, K: int, C: Optional[int] = None) -> "Policy":
        shape = (K,) if C is None else (C, K)
        return cls(np.full(shape, 1.0 / K))

    @classmethod
    def point_mass(cls, K: int, action: int) -> "Policy":
        p = np.zeros(K)
        p[action] = 1.0
        return cls(p)

    def tolist(self):
        return self.probs.tolist()


def as_policy(p: Union[Policy, ArrayLike]) -> Policy:
    return p if isinstance(p, Policy) else Policy(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class LoggedStep:
    action: int
    reward: float
    logging_prob: float
    context: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.reward <= 1.0:
            raise PreconditionError(f"reward must lie in [0, 1], got {self.reward!r}")
        if not 0.0 < self.logging_prob <= 1.0:
            raise PreconditionError(
                f"logging_prob must lie in (0, 1], got {self.logging_prob!r}"
            )


@dataclass(frozen=True)
class History:
    """Ordered logged data ``(a_n, r_n, pi_n(a_n), x_n)`` for n = 1..t.

    Stored column-wise as read-only numpy arrays.  ``epsilon`` is a declared
    lower bound on every logging probability and is checked at construction.
    """

    actions: np.ndarray
    rewards: np.ndarray
    logging_probs: np.ndarray
    epsilon: float
    K: int
    contexts: Optional[np.ndarray] = None
    C: Optional[int] = None

    def __post_init__(self):
        a = np.array(self.actions, dtype=np.int64).reshape(-1)
        r = np.array(self.rewards, dtype=float).reshape(-1)
        p = np.array(self.logging_probs, dtype=float).reshape(-1)
        ActionSpace(self.K)
        if not (a.size == r.size == p.size):
            raise DimensionError("actions, rewards and logging_probs differ in length")
        if not 0.0 < self.epsilon <= 1.0:
            raise PreconditionError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if a.size and (a.min() < 0 or a.max() >= self.K):
            raise DimensionError(f"action index outside 0..{self.K - 1}")
        if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise PreconditionError("rewards must lie in [0, 1]")
        if np.any(~np.isfinite(p)) or np.any(p > 1):
            raise PreconditionError("logging probabilities must lie in (0, 1]")
        if np.any(p < self.epsilon):
            n = int(np.argmax(p < self.epsilon)) + 1
            raise PreconditionError(
                f"step {n}: logging_prob {p[n - 1]!r} is below the declared epsilon "
                f"{self.epsilon!r}"
            )
        x = None
        if self.contexts is not None:
            if self.C is None:
                raise DimensionError("contextual history needs C")
            x = np.array(self.contexts, dtype=np.int64).reshape(-1)
            if x.size != a.size:
                raise DimensionError("contexts differ in length from actions")
            if x.size and (x.min() < 0 or x.max() >= self.C):
                raise DimensionError(f"context index outside 0..{self.C - 1}")
            x = _frozen(x)
        elif self.C is not None:
            raise DimensionError("C given but no contexts")
        object.__setattr__(self, "actions", _frozen(a))
        object.__setattr__(self, "rewards", _frozen(r))
        object.__setattr__(self, "logging_probs", _frozen(p))
        object.__setattr__(self, "contexts", x)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "K", int(self.K))

    @property
    def t(self) -> int:
        return int(self.actions.size)

    @property
    def contextual(self) -> bool:
        return self.contexts is not None

    def __len__(self) -> int:
        return self.t

    @property
    def steps(self) -> Iterator[LoggedStep]:
        for n in range(self.t):
            yield self.step(n)

    def step(self, n: int) -> LoggedStep:
        ctx = None if self.contexts is None else int(self.contexts[n])
        return LoggedStep(
            int(self.actions[n]), float(self.rewards[n]), float(self.logging_probs[n]), ctx
        )

    @classmethod
    def from_steps(
        cls,
        steps: Iterable[LoggedStep],
        epsilon: float,
        K: int,
        C: Optional[int] = None,
    ) -> "History":
        steps = list(steps)
        ctx = [s.context for s in steps]
        if C is None:
            if any(c is not None for c in ctx):
                raise DimensionError("steps carry contexts but C is None")
            contexts = None
        else:
            if any(c is None for c in ctx):
                raise DimensionError("contextual history has a step without context")
            contexts = np.array(ctx, dtype=np.int64)
        return cls(
            actions=np.array([s.action for s in steps], dtype=np.int64),
            rewards=np.array([s.reward for s in steps], dtype=float),
            logging_probs=np.array([s.logging_prob for s in steps], dtype=float),
            epsilon=epsilon,
            K=K,
            contexts=contexts,
            C=C,
        )

    def require_nonempty(self) -> None:
        if self.t < 1:
            raise PreconditionError("history is empty (t = 0)")


@dataclass(frozen=True)
class RewardModel:
    """Ground-truth mean rewards; only the simulator and tests may look at it."""

    means: np.ndarray
    family: str = "bernoulli"
    contexts: Optional[ContextSpace] = field(default=None)

    FAMILIES = ("bernoulli", "deterministic")

    def __post_init__(self):
        m = np.array(self.means, dtype=float)
        if m.ndim not in (1, 2):
            raise DimensionError(f"means must be a vector or a C x K matrix, got {m.shape}")
        if np.any(~np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
            raise PreconditionError("mean rewards must lie in [0, 1]")
        if self.family not in self.FAMILIES:
            raise PreconditionError(f"unknown reward family {self.family!r}")
        if m.ndim == 2:
            ctx = self.contexts if self.contexts is not None else ContextSpace.uniform(m.shape[0])
            if ctx.C != m.shape[0]:
                raise DimensionError("context distribution length differs from means rows")
            object.__setattr__(self, "contexts", ctx)
        elif self.contexts is not None:
            raise DimensionError("multi-armed model cannot carry a context distribution")
        object.__setattr__(self, "means", _frozen(m))

    @property
    def K(self) -> int:
        return self.means.shape[-1]

    @property
    def contextual(self) -> bool:
        return self.means.ndim == 2

    def mean(self, action: int, context: Optional[int] = None) -> float:
        if self.contextual:
            return float(self.means[context, action])
        return float(self.means[action])

    def sample(self, actions: np.ndarray, contexts: Optional[np.ndarray], rng) -> np.ndarray:
        """Draw one reward per (action, context) pair."""
        mu = self.means[contexts, actions] if self.contextual else self.means[actions]
        if self.family == "deterministic":
            return mu.astype(float)
        return (rng.random(mu.shape) < mu).astype(float)

    def to_dict(self) -> dict:
        return {
            "oracle": "oracle - not available to learners",
            "family": self.family,
            "means": self.means.tolist(),
            "context_probs": None if self.contexts is None else self.contexts.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RewardModel":
        ctx = d.get("context_probs")
        return cls(
            np.asarray(d["means"], dtype=float),
            d.get("family", "bernoulli"),
            None if ctx is None else ContextSpace(np.asarray(ctx, dtype=float)),
        )


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """Relative entropy KL(p || q) in nats; ``inf`` if p is not absolutely continuous w.r.t. q."""
    p = np.asarray(p.probs if isinstance(p, Policy) else p, dtype=float)
    q = np.asarray(q.probs if isinstance(q, Policy) else q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionError(f"KL needs two vectors of equal length, got {p.shape} and {q.shape}")
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    ps, qs = p[support], q[support]
    return max(float(np.sum(ps * (np.log(ps) - np.log(qs)))), 0.0)


def true_expected_reward(
    policy: Union[Policy, ArrayLike],
    model: RewardModel,
    context_space: Optional[ContextSpace] = None,
) -> float:
    """Expected reward of ``policy`` under the ground-truth model.

    For contextual models the context distribution is ``context_space`` if
    given, else the one stored on the model.
    """
    pol = as_policy(policy)
    if pol.K != model.K:
        raise DimensionError(f"policy has K={pol.K}, model has K={model.K}")
    if not model.contextual:
        if pol.contextual:
            raise DimensionError("contextual policy against multi-armed model")
        return float(pol.probs @ model.means)
    px = (context_space or model.contexts).probs
    if px.size != model.means.shape[0]:
        raise DimensionError("context distribution length differs from model")
    probs = pol.probs if pol.contextual else np.broadcast_to(pol.probs, model.means.shape)
    if probs.shape != model.means.shape:
        raise DimensionError(f"policy shape {probs.shape} != model shape {model.means.shape}")
    return float(px @ np.sum(probs * model.means, axis=1))


def epsilon_floor_policy(policy: Union[Policy, ArrayLike], epsilon: float) -> Policy:
    """Mix with the uniform policy so every action gets probability >= epsilon.

    Uses ``(1 - K*eps) * pi + eps``, which keeps the argmax of ``pi``.
    """
    pol = as_policy(policy)
    K = pol.K
    if not epsilon > 0:
        raise PreconditionError(f"epsilon must be positive, got {epsilon!r}")
    if epsilon * K > 1.0 + PROB_ATOL:
        raise InfeasibleFloorError(f"epsilon={epsilon!r} exceeds 1/K = {1.0 / K!r}")
    out = (1.0 - K * epsilon) * pol.probs + epsilon
    return Policy(np.maximum(out, epsilon))


# --- JSON Lines serialization -------------------------------------------------

def _step_record(n: int, h: History) -> dict:
    return {
        "n": n + 1,
        "action": int(h.actions[n]),
        "context": None if h.contexts is None else int(h.contexts[n]),
        "reward": float(h.rewards[n]),
        "logging_prob": float(h.logging_probs[n]),
    }


def dump_history(h: History, fp: IO[str]) -> None:
    fp.write(json.dumps({"epsilon": h.epsilon, "K": h.K, "C": h.C}) + "\n")
    for n in range(h.t):
        fp.write(json.dumps(_step_record(n, h)) + "\n")


def history_to_jsonl(h: History) -> str:
    lines = [json.dumps({"epsilon": h.epsilon, "K": h.K, "C": h.C})]
    lines.extend(json.dumps(_step_record(n, h)) for n in range(h.t))
    return "\n".join(lines) + "\n"


def _field(rec: dict, name: str, kind, lineno: int, nullable=False):
    where = f"line {lineno}, field {name!r}"
    if name not in rec:
        raise FormatError("missing field", where)
    v = rec[name]
    if v is None:
        if nullable:
            return None
        raise FormatError("must not be null", where)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise FormatError(f"expected integer, got {v!r}", where)
    elif isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FormatError(f"expected number, got {v!r}", where)
    return kind(v)


def parse_history(lines: Iterable[str]) -> History:
    """Parse the JSONL history format; raises FormatError with line/field info."""
    header = None
    acts, rews, probs, ctxs = [], [], [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON ({exc.msg})", f"line {lineno}") from None
        if not isinstance(rec, dict):
            raise FormatError("expected a JSON object", f"line {lineno}")
        if header is None:
            eps = _field(rec, "epsilon", float, lineno)
            K = _field(rec, "K", int, lineno)
            C = _field(rec, "C", int, lineno, nullable=True)
            header = (eps, K, C)
            continue
        n = _field(rec, "n", int, lineno)
        if n != len(acts) + 1:
            raise FormatError(f"expected n={len(acts) + 1}, got {n}", f"line {lineno}, field 'n'")
        acts.append(_field(rec, "action", int, lineno))
        ctxs.append(_field(rec, "context", int, lineno, nullable=True))
        rews.append(_field(rec, "reward", float, lineno))
        probs.append(_field(rec, "logging_prob", float, lineno))
        try:
            LoggedStep(acts[-1], rews[-1], probs[-1], ctxs[-1])
        except PreconditionError as exc:
            raise FormatError(str(exc), f"line {lineno}") from None
        if probs[-1] < header[0]:
            raise FormatError(
                f"logging_prob {probs[-1]!r} is below the declared epsilon {header[0]!r}",
                f"line {lineno}, field 'logging_prob'",
            )
        if (ctxs[-1] is None) != (header[2] is None):
            raise FormatError(
                "context presence does not match header C", f"line {lineno}, field 'context'"
            )
    if header is None:
        raise FormatError("empty history file (no header line)")
    eps, K, C = header
    return History(
        actions=np.array(acts, dtype=np.int64),
        rewards=np.array(rews, dtype=float),
        logging_probs=np.array(probs, dtype=float),
        epsilon=eps,
        K=K,
        contexts=None if C is None else np.array(ctxs, dtype=np.int64),
        C=C,
    )


def load_history(path) -> History:
    with open(path, encoding="utf-8") as fp:
        return parse_history(fp)


def save_history(h: History, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        dump_history(h, fp)
