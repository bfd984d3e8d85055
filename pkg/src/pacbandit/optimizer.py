"""Offline policy selection with a certified lower bound.

For a fixed KL budget the maximizer of a linear objective ``sum_a pi(a) s(a)``
over ``{pi : KL(pi || mu) <= c}`` is a Gibbs tilt of the prior
``pi_eta(a) ~ mu(a) exp(eta s(a))``, so the search for

    F(eta) = sum_a pi_eta(a) s(a) - BOUND(KL(pi_eta || mu))

is one-dimensional.  Because the bounds hold simultaneously over all
policies, the data-dependent maximizer is still certified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .bounds import (
    BoundSpec,
    bernstein_admissible_kl,
    bound_function,
    default_lambda_grid,
    evaluate_bound,
)
from .core import History, Policy, as_policy, kl_divergence
from .errors import BoundInapplicableError, DimensionError, PreconditionError
from .estimators import is_estimates

COARSE_ETAS = np.concatenate([[0.0], np.logspace(-3, 3, 61)])
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ETA_TOL = 1e-10
MAX_ITER = 200
MAX_DOUBLINGS = 60


def gibbs_policy(prior, scores, eta: float) -> np.ndarray:
    """``mu(a) exp(eta * score(a))`` normalized, computed with a max shift."""
    mu = as_policy(prior).probs
    s = np.asarray(scores, dtype=float)
    if mu.ndim != 1 or s.shape != mu.shape:
        raise DimensionError(f"prior {mu.shape} and scores {s.shape} must be equal-length vectors")
    if not eta >= 0:
        raise PreconditionError(f"eta must be nonnegative, got {eta!r}")
    if eta == 0:
        return mu.copy()
    support = mu > 0
    logits = np.full(mu.shape, -np.inf)
    logits[support] = np.log(mu[support]) + eta * s[support]
    w = np.exp(logits - logits.max())
    return w / w.sum()


def eta_for_kl(prior, scores, budget: float, eta_max: float = 1e12) -> float:
    """Smallest ``eta`` whose Gibbs policy has ``KL(pi_eta || prior) = budget``.

    Returns ``inf`` if the budget exceeds the KL reachable as ``eta -> inf``.
    """
    mu = as_policy(prior).probs

    def gap(eta):
        return kl_divergence(gibbs_policy(mu, scores, eta), mu) - budget

    if budget <= 0:
        return 0.0
    if gap(eta_max) < 0:
        return math.inf
    return brentq(gap, 0.0, eta_max, xtol=1e-14, rtol=1e-14, maxiter=500)


@dataclass(frozen=True)
class Certificate:
    """A policy and a high-probability lower bound on its true expected reward."""

    policy: np.ndarray
    prior: np.ndarray
    scores: np.ndarray
    is_estimate: float
    kl_to_prior: float
    bound_kind: str
    bound_value: float
    lower_bound: float
    beta: float
    t: int
    eps: float
    lam: Optional[float] = None
    grid: Optional[tuple] = None
    search: dict = field(default_factory=dict, compare=False, repr=False)

    def __eq__(self, other):
        if not isinstance(other, Certificate):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("policy", "prior", "scores")
        ) and all(
            getattr(self, f) == getattr(other, f)
            for f in ("is_estimate", "kl_to_prior", "bound_kind", "bound_value",
                      "lower_bound", "beta", "t", "eps", "lam", "grid")
        )

    __hash__ = None

    @property
    def bound_spec(self) -> BoundSpec:
        return BoundSpec(self.bound_kind, self.beta, self.lam, self.grid)

    def to_dict(self) -> dict:
        d = {
            "policy": self.policy.tolist(),
            "prior": self.prior.tolist(),
            "scores": self.scores.tolist(),
            "is_estimate": self.is_estimate,
            "kl_to_prior": self.kl_to_prior,
            "bound_kind": self.bound_kind,
            "bound_value": self.bound_value,
            "lower_bound": self.lower_bound,
            "beta": self.beta,
            "t": self.t,
            "eps": self.eps,
            "lambda": self.lam,
            "grid": None if self.grid is None else list(self.grid),
        }
        if self.search:
            d["search"] = self.search
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(
            policy=np.asarray(d["policy"], dtype=float),
            prior=np.asarray(d["prior"], dtype=float),
            scores=np.asarray(d["scores"], dtype=float),
            is_estimate=float(d["is_estimate"]),
            kl_to_prior=float(d["kl_to_prior"]),
            bound_kind=d["bound_kind"],
            bound_value=float(d["bound_value"]),
            lower_bound=float(d["lower_bound"]),
            beta=float(d["beta"]),
            t=int(d["t"]),
            eps=float(d["eps"]),
            lam=d.get("lambda"),
            grid=None if d.get("grid") is None else tuple(d["grid"]),
            search=d.get("search", {}),
        )


def make_spec(bound_kind: str, beta: float, t: int, eps: float, lam=None, grid=None) -> BoundSpec:
    """BoundSpec for certification; ``hoeffding-grid`` defaults to the standard grid."""
    if bound_kind == "hoeffding-grid" and grid is None:
        grid = tuple(default_lambda_grid(t, eps, beta))
    return BoundSpec(bound_kind, beta, lam, None if grid is None else tuple(grid))


def _certificate(policy, scores, prior, t, eps, spec: BoundSpec, search=None) -> Certificate:
    is_est = float(policy @ scores)
    kl = kl_divergence(policy, prior)
    bound = evaluate_bound(spec, kl, t, eps).value
    return Certificate(
        policy=np.asarray(policy, dtype=float),
        prior=np.asarray(prior, dtype=float),
        scores=np.asarray(scores, dtype=float),
        is_estimate=is_est,
        kl_to_prior=kl,
        bound_kind=spec.kind,
        bound_value=bound,
        lower_bound=is_est - bound,
        beta=spec.beta,
        t=int(t),
        eps=float(eps),
        lam=spec.lam,
        grid=spec.grid,
        search=search or {},
    )


def _check_prior(prior, K) -> np.ndarray:
    mu = as_policy(prior).probs
    if mu.ndim != 1 or mu.size != K:
        raise DimensionError(f"prior must be a length-{K} vector")
    if np.any(mu <= 0):
        raise PreconditionError("prior must be strictly positive")
    return mu


def objective(scores, prior, t, eps, spec: BoundSpec):
    """``eta -> F(eta)``; ``-inf`` where the KL is inadmissible."""
    bound = bound_function(spec, t, eps)
    s = np.asarray(scores, dtype=float)

    def F(eta):
        pi = gibbs_policy(prior, s, eta)
        return float(pi @ s) - bound(kl_divergence(pi, prior))

    return F


def maximize_eta(F, coarse=COARSE_ETAS, tol=ETA_TOL, max_iter=MAX_ITER):
    """Coarse scan, bracket by doubling if needed, then golden-section search.

    Returns ``(best_eta, best_value, n_evaluations)``; the best point over
    every evaluation is kept, so the result is never worse than ``F(0)``.
    """
    evals = {}

    def f(eta):
        if eta not in evals:
            evals[eta] = F(eta)
        return evals[eta]

    values = [f(eta) for eta in coarse]
    i = int(np.argmax(values))
    lo = coarse[i - 1] if i > 0 else coarse[0]
    if i + 1 < len(coarse):
        hi = coarse[i + 1]
    else:
        lo, hi = coarse[-2], coarse[-1]
        for _ in range(MAX_DOUBLINGS):
            if f(2.0 * hi) <= f(hi):
                hi = 2.0 * hi
                break
            lo, hi = hi, 2.0 * hi
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        # ties move left: the infeasible (-inf) region lies to the right
        if f(c) >= f(d):
            b, d = d, c
            c = b - GOLDEN * (b - a)
        else:
            a, c = c, d
            d = a + GOLDEN * (b - a)
    best = max(evals, key=lambda e: (evals[e], -e))
    return best, evals[best], len(evals)


def optimize_scores(scores, prior, t, eps, spec: BoundSpec) -> Certificate:
    """Maximize the certified lower bound over the Gibbs family of ``prior``."""
    s = np.asarray(scores, dtype=float)
    mu = _check_prior(prior, s.size)
    if spec.kind == "bernstein-optimized":
        threshold = bernstein_admissible_kl(t, eps, spec.beta)
        if threshold < 0:
            raise BoundInapplicableError(
                f"bernstein-optimized bound inapplicable at t={t}, eps={eps}, beta={spec.beta}: "
                f"admissible KL threshold {threshold:.6g} < 0"
            )
    F = objective(s, mu, t, eps, spec)
    eta, value, n_evals = maximize_eta(F)
    pi = gibbs_policy(mu, s, eta)
    return _certificate(pi, s, mu, t, eps, spec, {"eta": eta, "objective": value, "evaluations": n_evals})


def optimize_policy(
    h: History,
    prior=None,
    beta: float = 0.05,
    bound_kind: str = "hoeffding-optimized",
    lam=None,
    grid=None,
) -> Certificate:
    """Certified Gibbs policy for a multi-armed history (uniform prior by default)."""
    scores = is_estimates(h)
    mu = Policy.uniform(h.K).probs if prior is None else prior
    spec = make_spec(bound_kind, beta, h.t, h.epsilon, lam, grid)
    return optimize_scores(scores, mu, h.t, h.epsilon, spec)


def certify(
    policy,
    h: History,
    prior=None,
    beta: float = 0.05,
    bound_kind: str = "hoeffding-optimized",
    lam=None,
    grid=None,
) -> Certificate:
    """Certificate for a given policy; no optimization."""
    scores = is_estimates(h)
    mu = _check_prior(Policy.uniform(h.K).probs if prior is None else prior, h.K)
    pi = as_policy(policy).probs
    if pi.shape != mu.shape:
        raise DimensionError(f"policy shape {pi.shape} != prior shape {mu.shape}")
    spec = make_spec(bound_kind, beta, h.t, h.epsilon, lam, grid)
    if not spec.valid_a_priori:
        raise PreconditionError(f"{spec.kind} is not a valid a-priori bound; cannot certify with it")
    return _certificate(pi, scores, mu, h.t, h.epsilon, spec)


def recheck(cert: Certificate, h: Optional[History] = None, rtol: float = 0.0) -> bool:
    """Recompute a certificate from its own fields (and ``h`` if given)."""
    scores = is_estimates(h) if h is not None else cert.scores
    t = h.t if h is not None else cert.t
    eps = h.epsilon if h is not None else cert.eps
    fresh = _certificate(cert.policy, scores, cert.prior, t, eps, cert.bound_spec)
    if rtol == 0.0:
        return fresh == cert
    return math.isclose(fresh.lower_bound, cert.lower_bound, rel_tol=rtol, abs_tol=rtol)
