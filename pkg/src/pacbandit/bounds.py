"""PAC-Bayes deviation bounds for the IS policy estimate.

Every function returns the radius ``B`` of a two-sided statement
``|r(pi) - r_IS(pi)| <= B`` that holds, with probability at least ``1 - beta``
over the logged data, simultaneously for every policy ``pi`` whose divergence
from the data-independent prior is ``kl``.  ``t`` is the number of logged
steps and ``eps`` a lower bound on every logging probability.

The parametric forms need a confidence parameter ``lam`` fixed before the data
is seen.  The ``*_oracle`` forms plug in the data-dependent minimizer and are
therefore *not* valid a-priori bounds; they are provided as a reference.  The
``optimized_*`` forms are parameter-free.

Allocation of the confidence budget across KL events
----------------------------------------------------
The parameter-free bounds split ``beta`` over events ``{k-1 < KL <= k}``.
Allocating ``6*beta/(pi*k**2)`` sums to ``pi*beta``, not ``beta``, because
``sum 1/k**2 = pi**2/6``; the allocation that sums to ``beta`` is
``6*beta/(pi**2 * k**2)`` (:func:`event_budget`).  The closed forms below keep
the ``ln(4*pi/(3*beta))`` constant that matches the first allocation, so read
literally they hold at confidence ``1 - pi*beta``; the normalized budget would
add ``ln(pi)`` inside the logarithm.  Similarly, the
admissible-KL threshold of the optimized Bernstein bound uses ``ln(2/beta)``;
an alternative form with ``ln(pi/(3*beta))`` sets the event count
(:func:`bernstein_event_count`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InadmissibleKLError, PreconditionError

E_MINUS_2 = math.e - 2.0

KINDS = (
    "hoeffding-parametric",
    "bernstein-parametric",
    "hoeffding-grid",
    "hoeffding-optimized",
    "bernstein-optimized",
    "hoeffding-oracle",
    "bernstein-oracle",
)
ORACLE_KINDS = ("hoeffding-oracle", "bernstein-oracle")
CERTIFYING_KINDS = tuple(k for k in KINDS if k not in ORACLE_KINDS)


def _check(kl, t, eps, beta):
    if not kl >= 0:
        raise PreconditionError(f"kl must be nonnegative, got {kl!r}")
    if int(t) != t or t < 1:
        raise PreconditionError(f"t must be a positive integer, got {t!r}")
    if not 0.0 < eps <= 1.0:
        raise PreconditionError(f"eps must lie in (0, 1], got {eps!r}")
    if not 0.0 < beta < 1.0:
        raise PreconditionError(f"beta must lie in (0, 1), got {beta!r}")


def _log_two_over(beta):
    return math.log(2.0 / beta)


def _log_union(beta):
    # ln(4*pi / (3*beta)), the constant of the parameter-free bounds
    return math.log(4.0 * math.pi / (3.0 * beta))


# --- parametric -----------------------------------------------------------------

def hoeffding_parametric(kl, lam, t, eps, beta):
    """``lam/(8 t eps^2) + (kl + ln(2/beta))/lam`` for a fixed ``lam > 0``."""
    _check(kl, t, eps, beta)
    if not lam > 0:
        raise PreconditionError(f"lambda must be positive, got {lam!r}")
    return lam / (8.0 * t * eps * eps) + (kl + _log_two_over(beta)) / lam


def bernstein_parametric(kl, lam, t, eps, beta):
    """``2 lam (e-2)/(t eps) + (kl + ln(2/beta))/lam`` for a fixed ``lam`` in (0, 1)."""
    _check(kl, t, eps, beta)
    if not 0.0 < lam < 1.0:
        raise PreconditionError(f"lambda must lie in the open interval (0, 1), got {lam!r}")
    return 2.0 * lam * E_MINUS_2 / (t * eps) + (kl + _log_two_over(beta)) / lam


# --- oracle (data-dependent lambda) ---------------------------------------------

def oracle_lambda_hoeffding(kl, t, eps, beta):
    _check(kl, t, eps, beta)
    return 2.0 * eps * math.sqrt(2.0 * t * (kl + _log_two_over(beta)))


def hoeffding_oracle(kl, t, eps, beta):
    _check(kl, t, eps, beta)
    return math.sqrt((kl + _log_two_over(beta)) / (2.0 * t)) / eps


def oracle_lambda_bernstein(kl, t, eps, beta):
    """Minimizer of :func:`bernstein_parametric` over ``lam > 0``.

    Can exceed 1, in which case the parametric bound does not apply at it;
    see :func:`bernstein_oracle_feasible`.
    """
    _check(kl, t, eps, beta)
    return math.sqrt(t * eps * (kl + _log_two_over(beta)) / (2.0 * E_MINUS_2))


def bernstein_oracle_feasible(kl, t, eps, beta) -> bool:
    return oracle_lambda_bernstein(kl, t, eps, beta) < 1.0


def bernstein_oracle(kl, t, eps, beta):
    """``sqrt(8 (e-2)(kl + ln(2/beta)) / (t eps))``, regardless of feasibility."""
    _check(kl, t, eps, beta)
    return math.sqrt(8.0 * E_MINUS_2 * (kl + _log_two_over(beta)) / (t * eps))


# --- grid union baseline ----------------------------------------------------------

def default_lambda_grid(t, eps, beta, size=16, decades=3.0) -> np.ndarray:
    """Geometric grid of ``size`` points spanning ``decades`` decades.

    Centered on the Hoeffding oracle lambda at ``kl = 0``, which depends only
    on ``(t, eps, beta)`` and so may be fixed before the data is seen.
    """
    if size < 1:
        raise PreconditionError("grid size must be at least 1")
    center = oracle_lambda_hoeffding(0.0, t, eps, beta)
    half = decades / 2.0
    if size == 1:
        return np.array([center])
    return center * np.logspace(-half, half, size)


def hoeffding_grid_union(kl, t, eps, beta, grid: Sequence[float]):
    """Best Hoeffding parametric bound over ``grid`` with ``beta`` split evenly."""
    _check(kl, t, eps, beta)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise PreconditionError("lambda grid is empty")
    if np.any(~(grid > 0)):
        raise PreconditionError("lambda grid must contain positive values only")
    share = beta / grid.size
    return min(hoeffding_parametric(kl, lam, t, eps, share) for lam in grid)


def hoeffding_grid_argmin(kl, t, eps, beta, grid: Sequence[float]) -> float:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    share = beta / grid.size
    vals = [hoeffding_parametric(kl, lam, t, eps, share) for lam in grid]
    return float(grid[int(np.argmin(vals))])


# --- parameter-free ---------------------------------------------------------------

def optimized_hoeffding(kl, t, eps, beta):
    """``(1/eps) sqrt((kl + ln(4 pi/(3 beta))) / t)``."""
    _check(kl, t, eps, beta)
    return math.sqrt((kl + _log_union(beta)) / t) / eps


def bernstein_admissible_kl(t, eps, beta):
    """Largest KL for which the optimized Bernstein bound applies.

    ``(2(e-2) - t eps (2 + ln(2/beta))) / (2 t eps)``; negative means no
    policy (not even the prior) is admissible.
    """
    _check(0.0, t, eps, beta)
    te = t * eps
    return (2.0 * E_MINUS_2 - te * (2.0 + _log_two_over(beta))) / (2.0 * te)


def optimized_bernstein(kl, t, eps, beta):
    """``2 sqrt((e-2)(kl + ln(4 pi/(3 beta))) / (t eps))`` for admissible ``kl``.

    Raises InadmissibleKLError (carrying the threshold) otherwise.
    """
    _check(kl, t, eps, beta)
    threshold = bernstein_admissible_kl(t, eps, beta)
    if kl > threshold:
        raise InadmissibleKLError(kl, threshold)
    return 2.0 * math.sqrt(E_MINUS_2 * (kl + _log_union(beta)) / (t * eps))


def event_budget(k, beta):
    """Confidence share of the event ``{k-1 < KL <= k}``; sums to ``beta`` over k >= 1."""
    if int(k) != k or k < 1:
        raise PreconditionError(f"event index must be a positive integer, got {k!r}")
    return 6.0 * beta / (math.pi ** 2 * k * k)


def bernstein_event_count(t, eps, beta) -> int:
    """Number of KL events ``ceil(admissible threshold)`` used to cover admissible KLs."""
    return math.ceil(bernstein_admissible_kl(t, eps, beta))


def bernstein_event_lambda(k, t, eps, beta):
    """Per-event Bernstein parameter ``sqrt(t eps (k + ln(pi k^2/(3 beta))) / (2(e-2)))``."""
    return math.sqrt(t * eps * (k + math.log(math.pi * k * k / (3.0 * beta))) / (2.0 * E_MINUS_2))


def envelope_gap(x, beta):
    """``(2x + ln(4pi/(3beta))) - (x + ln(e pi (1+x)^2/(3beta)))``, >= 0 with equality at 1.

    ``beta`` cancels; the difference is evaluated as ``x - 1 + 2 ln(2/(1+x))``.
    """
    if not x > 0:
        raise PreconditionError(f"x must be positive, got {x!r}")
    if not 0.0 < beta < 1.0:
        raise PreconditionError(f"beta must lie in (0, 1), got {beta!r}")
    return (x - 1.0) + 2.0 * (math.log(2.0) - math.log1p(x))


# --- spec / result objects ----------------------------------------------------------

@dataclass(frozen=True)
class BoundSpec:
    kind: str
    beta: float
    lam: Optional[float] = None
    grid: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown bound kind {self.kind!r}; choose from {KINDS}")
        if not 0.0 < self.beta < 1.0:
            raise PreconditionError(f"beta must lie in (0, 1), got {self.beta!r}")
        parametric = self.kind.endswith("-parametric")
        if parametric != (self.lam is not None):
            raise PreconditionError("lambda is required exactly for parametric bounds")
        if (self.kind == "hoeffding-grid") != (self.grid is not None):
            raise PreconditionError("a grid is required exactly for hoeffding-grid")
        if self.kind == "bernstein-parametric" and not 0.0 < self.lam < 1.0:
            raise PreconditionError("bernstein-parametric needs lambda in (0, 1)")
        if self.kind == "hoeffding-parametric" and not self.lam > 0:
            raise PreconditionError("hoeffding-parametric needs lambda > 0")
        if self.grid is not None:
            g = tuple(float(v) for v in self.grid)
            if not g or any(not v > 0 for v in g) or list(g) != sorted(g):
                raise PreconditionError("grid must be a nonempty sorted list of positive reals")
            object.__setattr__(self, "grid", g)

    @property
    def valid_a_priori(self) -> bool:
        return self.kind not in ORACLE_KINDS


@dataclass(frozen=True)
class BoundResult:
    kind: str
    value: float
    kl: float
    t: int
    eps: float
    beta: float
    lam: Optional[float] = None
    admissible: Optional[bool] = None
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "kl": self.kl,
            "t": self.t,
            "eps": self.eps,
            "beta": self.beta,
            "lambda": self.lam,
            "admissible": self.admissible,
        }


def evaluate_bound(spec: BoundSpec, kl, t, eps, strict=True) -> BoundResult:
    """Evaluate ``spec`` at ``(kl, t, eps)``.

    With ``strict=False`` an inadmissible optimized-Bernstein KL yields a
    result flagged ``admissible=False`` (value still from the closed form)
    instead of raising.
    """
    kind, beta = spec.kind, spec.beta
    lam = None
    admissible = None
    if kind == "hoeffding-parametric":
        lam = spec.lam
        value = hoeffding_parametric(kl, lam, t, eps, beta)
    elif kind == "bernstein-parametric":
        lam = spec.lam
        value = bernstein_parametric(kl, lam, t, eps, beta)
    elif kind == "hoeffding-grid":
        value = hoeffding_grid_union(kl, t, eps, beta, spec.grid)
        lam = hoeffding_grid_argmin(kl, t, eps, beta, spec.grid)
    elif kind == "hoeffding-optimized":
        value = optimized_hoeffding(kl, t, eps, beta)
    elif kind == "bernstein-optimized":
        threshold = bernstein_admissible_kl(t, eps, beta)
        admissible = kl <= threshold
        if strict or admissible:
            value = optimized_bernstein(kl, t, eps, beta)
        else:
            value = 2.0 * math.sqrt(E_MINUS_2 * (kl + _log_union(beta)) / (t * eps))
    elif kind == "hoeffding-oracle":
        lam = oracle_lambda_hoeffding(kl, t, eps, beta)
        value = hoeffding_oracle(kl, t, eps, beta)
    else:  # bernstein-oracle
        lam = oracle_lambda_bernstein(kl, t, eps, beta)
        admissible = lam < 1.0
        value = bernstein_oracle(kl, t, eps, beta)
    return BoundResult(kind, float(value), float(kl), int(t), float(eps), float(beta), lam, admissible)


def bound_function(spec: BoundSpec, t, eps):
    """``kl -> bound value`` closure for the optimizer; ``inf`` where inadmissible."""
    if not spec.valid_a_priori:
        raise PreconditionError(f"{spec.kind} is not a valid a-priori bound; cannot certify with it")
    if spec.kind == "bernstein-optimized":
        threshold = bernstein_admissible_kl(t, eps, spec.beta)

        def f(kl):
            return math.inf if kl > threshold else optimized_bernstein(kl, t, eps, spec.beta)

        return f
    return lambda kl: evaluate_bound(spec, kl, t, eps).value
