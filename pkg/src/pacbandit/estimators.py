"""Importance-sampling reward estimates and martingale-difference quantities."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from .core import History, LoggedStep, Policy, RewardModel, as_policy
from .errors import DimensionError, PreconditionError, UnseenContextError


def _require_multi_armed(h: History) -> None:
    h.require_nonempty()
    if h.contextual:
        raise DimensionError(
            "contextual history passed to a multi-armed estimator; "
            "use contextual_is_estimate / contextual_policy_estimate"
        )


def _require_contextual(h: History) -> None:
    h.require_nonempty()
    if not h.contextual:
        raise DimensionError("multi-armed history passed to a contextual estimator")


def is_estimates(h: History) -> np.ndarray:
    """IS estimates for all K actions at once: ``(1/t) sum_n 1{a_n=a} r_n / pi_n(a_n)``."""
    _require_multi_armed(h)
    weights = h.rewards / h.logging_probs
    return np.bincount(h.actions, weights=weights, minlength=h.K) / h.t


def is_estimate_action(a: int, h: History) -> float:
    if not 0 <= a < h.K:
        raise DimensionError(f"action {a} outside 0..{h.K - 1}")
    return float(is_estimates(h)[a])


def is_estimate_policy(pi: Union[Policy, np.ndarray], h: History) -> float:
    """Policy-level estimate ``sum_a pi(a) * r_IS(a)`` for a multi-armed history."""
    pol = as_policy(pi)
    if pol.contextual or pol.K != h.K:
        raise DimensionError(f"policy shape {pol.probs.shape} does not match K={h.K}")
    return float(pol.probs @ is_estimates(h))


def context_counts(h: History) -> np.ndarray:
    """n(x, h) for every context x."""
    _require_contextual(h)
    return np.bincount(h.contexts, minlength=h.C)


def contextual_is_estimates(h: History) -> Tuple[np.ndarray, np.ndarray]:
    """C x K matrix of per-(context, action) IS estimates and the context counts.

    Rows of unseen contexts are NaN; they have no estimate.
    """
    counts = context_counts(h)
    flat = h.contexts * h.K + h.actions
    sums = np.bincount(flat, weights=h.rewards / h.logging_probs, minlength=h.C * h.K)
    sums = sums.reshape(h.C, h.K)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = sums / counts[:, None]
    est[counts == 0] = np.nan
    return est, counts


def contextual_is_estimate(a: int, x: int, h: History) -> float:
    _require_contextual(h)
    if not 0 <= a < h.K or not 0 <= x < h.C:
        raise DimensionError(f"(action={a}, context={x}) outside the {h.K} x {h.C} grid")
    n_x = int(np.count_nonzero(h.contexts == x))
    if n_x == 0:
        raise UnseenContextError(f"context {x} never appears in the history")
    mask = (h.contexts == x) & (h.actions == a)
    return float(np.sum(h.rewards[mask] / h.logging_probs[mask]) / n_x)


def contextual_policy_estimate(pi: Union[Policy, np.ndarray], h: History) -> Tuple[float, List[int]]:
    """Count-weighted policy estimate over the contexts seen in ``h``.

    Returns ``(sum_x n(x,h)/t * sum_a pi(a,x) c_IS(a,x,h), unseen_contexts)``.
    Unseen contexts contribute nothing; they are returned so callers can
    report them.  Note this is a modelling choice, not a quantity with a
    textbook definition.
    """
    pol = as_policy(pi)
    est, counts = contextual_is_estimates(h)
    probs = pol.probs if pol.contextual else np.broadcast_to(pol.probs, est.shape)
    if probs.shape != est.shape:
        raise DimensionError(f"policy shape {probs.shape} != ({h.C}, {h.K})")
    seen = counts > 0
    per_context = np.sum(probs[seen] * est[seen], axis=1)
    value = float(np.sum(counts[seen] / h.t * per_context))
    return value, [int(x) for x in np.flatnonzero(~seen)]


# --- martingale quantities ----------------------------------------------------

def martingale_difference(a: int, step: LoggedStep, model: RewardModel) -> float:
    """``1{a_n = a} r_n / pi_n(a_n) - rbar(a)`` for one logged step."""
    if step.context is not None or model.contextual:
        raise DimensionError("martingale_difference is defined for multi-armed steps")
    hit = step.reward / step.logging_prob if step.action == a else 0.0
    return hit - model.mean(a)


def _outcomes(logging: np.ndarray, model: RewardModel) -> Iterator[Tuple[float, int, float]]:
    # (probability, action, reward) for every possible outcome of one step
    for b, pb in enumerate(logging):
        if pb == 0.0:
            continue
        m = model.mean(b)
        if model.family == "deterministic":
            yield pb, b, m
        else:
            if m > 0.0:
                yield pb * m, b, 1.0
            if m < 1.0:
                yield pb * (1.0 - m), b, 0.0


def _check_logging_row(logging, model: RewardModel) -> np.ndarray:
    row = as_policy(logging).probs
    if row.ndim != 1 or row.size != model.K or model.contextual:
        raise DimensionError("logging row and multi-armed model must share K")
    return row


def martingale_difference_mean(a: int, logging, model: RewardModel) -> float:
    """E[Z_n(a) | past] by exact enumeration; zero whenever ``logging(a) > 0``."""
    row = _check_logging_row(logging, model)
    total = 0.0
    for p, b, r in _outcomes(row, model):
        z = martingale_difference(a, LoggedStep(b, r, float(row[b])), model)
        total += p * z
    return total


def conditional_variance_step(a: int, logging, model: RewardModel) -> float:
    """E[Z_n(a)^2 | past] by exact enumeration over (action, reward) outcomes."""
    row = _check_logging_row(logging, model)
    if row[a] <= 0.0:
        raise PreconditionError("logging policy must put positive mass on every action")
    total = 0.0
    for p, b, r in _outcomes(row, model):
        z = martingale_difference(a, LoggedStep(b, r, float(row[b])), model)
        total += p * z * z
    return total


# --- reports ------------------------------------------------------------------

@dataclass
class EstimateReport:
    per_action: np.ndarray
    policy_value: float
    t: int
    epsilon: float
    counts: Optional[np.ndarray] = None
    unseen_contexts: List[int] = field(default_factory=list)
    policy: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        if self.per_action.ndim == 2:
            # JSON has no NaN; unseen contexts become null rows
            per_action = [
                None if np.isnan(row).all() else [float(v) for v in row]
                for row in self.per_action
            ]
        else:
            per_action = self.per_action.tolist()
        return {
            "t": self.t,
            "epsilon": self.epsilon,
            "per_action": per_action,
            "policy": None if self.policy is None else self.policy.tolist(),
            "policy_value": self.policy_value,
            "context_counts": None if self.counts is None else self.counts.tolist(),
            "unseen_contexts": self.unseen_contexts,
        }


def estimate_report(h: History, policy: Optional[Union[Policy, np.ndarray]] = None) -> EstimateReport:
    """Per-action estimates plus the value of ``policy`` (uniform by default)."""
    if h.contextual:
        pol = as_policy(policy) if policy is not None else Policy.uniform(h.K, h.C)
        est, counts = contextual_is_estimates(h)
        value, unseen = contextual_policy_estimate(pol, h)
        return EstimateReport(est, value, h.t, h.epsilon, counts, unseen, pol.probs)
    pol = as_policy(policy) if policy is not None else Policy.uniform(h.K)
    est = is_estimates(h)
    return EstimateReport(est, float(pol.probs @ est), h.t, h.epsilon, policy=pol.probs)
