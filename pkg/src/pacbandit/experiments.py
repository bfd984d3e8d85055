"""Monte Carlo coverage runs and side-by-side bound tables."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import bounds as B
from .core import Policy, as_policy, true_expected_reward
from .errors import BoundInapplicableError, PreconditionError
from .optimizer import certify, make_spec, optimize_policy
from .simulator import SimConfig, generate_history, reward_model

POLICY_MODES = ("fixed", "optimized")


@dataclass(frozen=True)
class TrialRecord:
    replicate: int
    kl: float
    estimate: float
    true_value: float
    bound_value: float
    violated: bool


@dataclass
class CoverageReport:
    m: int
    violations: int
    beta: float
    bound_kind: str
    policy_mode: str
    records: List[TrialRecord] = field(default_factory=list)

    @property
    def violation_rate(self) -> float:
        return self.violations / self.m

    @property
    def allowance(self) -> float:
        """``beta m + 3 sqrt(m beta (1 - beta))``: binomial 3-sigma ceiling on violations."""
        return self.beta * self.m + 3.0 * math.sqrt(self.m * self.beta * (1.0 - self.beta))

    @property
    def passed(self) -> bool:
        return self.violations <= self.allowance

    def summary(self) -> dict:
        gaps = [abs(r.true_value - r.estimate) for r in self.records]
        return {
            "m": self.m,
            "violations": self.violations,
            "violation_rate": self.violation_rate,
            "beta": self.beta,
            "allowance": self.allowance,
            "within_allowance": self.passed,
            "bound_kind": self.bound_kind,
            "policy_mode": self.policy_mode,
            "mean_bound": float(np.mean([r.bound_value for r in self.records])),
            "max_abs_error": float(max(gaps)),
            "mean_kl": float(np.mean([r.kl for r in self.records])),
        }

    def to_dict(self, with_records: bool = True) -> dict:
        d = self.summary()
        if with_records:
            d["records"] = [vars(r) for r in self.records]
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "kl", "estimate", "true_value", "bound_value", "violated"])
        for r in self.records:
            w.writerow([r.replicate, repr(r.kl), repr(r.estimate), repr(r.true_value),
                        repr(r.bound_value), int(r.violated)])
        return buf.getvalue()


def run_coverage(
    config: SimConfig,
    m: int,
    bound_kind: str = "hoeffding-optimized",
    beta: float = 0.05,
    policy_mode: str = "optimized",
    policy=None,
    prior=None,
    lam=None,
    grid=None,
    workers: int = 1,
) -> CoverageReport:
    """Count how often ``|r(pi) - r_IS(pi)|`` exceeds the bound over ``m`` datasets.

    ``policy_mode="optimized"`` re-selects the policy on every replicate, which
    exercises validity for data-dependent policies; ``"fixed"`` certifies
    ``policy`` (the prior by default) every time.
    """
    if m < 1:
        raise PreconditionError(f"m must be at least 1, got {m!r}")
    if policy_mode not in POLICY_MODES:
        raise PreconditionError(f"policy_mode must be one of {POLICY_MODES}")
    if config.contextual:
        raise PreconditionError("coverage runs are implemented for multi-armed configs only")
    if bound_kind == "bernstein-optimized":
        threshold = B.bernstein_admissible_kl(config.t, config.epsilon, beta)
        if threshold < 0:
            raise BoundInapplicableError(
                f"bernstein-optimized bound inapplicable at t={config.t}, eps={config.epsilon}, "
                f"beta={beta}: admissible KL threshold {threshold:.6g} < 0"
            )
    # validate the spec once up front
    make_spec(bound_kind, beta, config.t, config.epsilon, lam, grid)
    model = reward_model(config)
    mu = Policy.uniform(config.K).probs if prior is None else as_policy(prior).probs
    fixed = as_policy(mu if policy is None else policy).probs

    def trial(i):
        h, _ = generate_history(config, i)
        if policy_mode == "optimized":
            cert = optimize_policy(h, mu, beta, bound_kind, lam, grid)
        else:
            cert = certify(fixed, h, mu, beta, bound_kind, lam, grid)
        truth = true_expected_reward(cert.policy, model)
        return TrialRecord(
            i, cert.kl_to_prior, cert.is_estimate, truth, cert.bound_value,
            abs(truth - cert.is_estimate) > cert.bound_value,
        )

    if workers <= 1:
        records = [trial(i) for i in range(m)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(trial, range(m)))
    violations = sum(r.violated for r in records)
    return CoverageReport(m, violations, beta, bound_kind, policy_mode, records)


# --- compare ------------------------------------------------------------------

COMPARE_COLUMNS = ("kind", "value", "lambda", "feasible", "valid_a_priori")


@dataclass(frozen=True)
class CompareRow:
    kind: str
    value: Optional[float]
    lam: Optional[float]
    feasible: bool
    valid_a_priori: bool
    note: str = ""


@dataclass
class CompareTable:
    kl: float
    t: int
    eps: float
    beta: float
    rows: List[CompareRow]
    grid: Sequence[float] = ()
    grid_tradeoff: List[dict] = field(default_factory=list)

    def row(self, kind: str) -> CompareRow:
        for r in self.rows:
            if r.kind == kind:
                return r
        raise KeyError(kind)

    def to_dict(self) -> dict:
        return {
            "kl": self.kl,
            "t": self.t,
            "eps": self.eps,
            "beta": self.beta,
            "grid": list(self.grid),
            "rows": [
                {"kind": r.kind, "value": r.value, "lambda": r.lam, "feasible": r.feasible,
                 "valid_a_priori": r.valid_a_priori, "note": r.note}
                for r in self.rows
            ],
            "grid_tradeoff": self.grid_tradeoff,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for r in self.rows:
            w.writerow([
                r.kind,
                "" if r.value is None else repr(r.value),
                "" if r.lam is None else repr(r.lam),
                int(r.feasible),
                int(r.valid_a_priori),
            ])
        return buf.getvalue()


def grid_tradeoff(kl, t, eps, beta, sizes=(1, 2, 4, 8, 16, 32, 64, 128, 256), decades=3.0) -> List[dict]:
    """Grid-union bound as the grid grows: more points, smaller share of beta each."""
    out = []
    for n in sizes:
        grid = B.default_lambda_grid(t, eps, beta, n, decades)
        out.append({"size": int(n), "value": B.hoeffding_grid_union(kl, t, eps, beta, grid)})
    return out


def compare_bounds(
    kl, t, eps, beta, lam=None, grid=None, grid_size=16, grid_decades=3.0, sweep=False,
) -> CompareTable:
    """Evaluate every bound kind at the same ``(kl, t, eps, beta)``."""
    B._check(kl, t, eps, beta)
    grid = tuple(grid) if grid is not None else tuple(B.default_lambda_grid(t, eps, beta, grid_size, grid_decades))
    rows = []
    oracle_note = "not a valid a-priori bound (lambda depends on the data); reference only"
    for kind in B.KINDS:
        if kind.endswith("-parametric"):
            if lam is None:
                continue
            if kind == "bernstein-parametric" and not 0 < lam < 1:
                rows.append(CompareRow(kind, None, lam, False, True, "lambda outside (0, 1)"))
                continue
            res = B.evaluate_bound(B.BoundSpec(kind, beta, lam=lam), kl, t, eps)
            rows.append(CompareRow(kind, res.value, lam, True, True))
        elif kind == "hoeffding-grid":
            res = B.evaluate_bound(B.BoundSpec(kind, beta, grid=tuple(sorted(grid))), kl, t, eps)
            rows.append(CompareRow(kind, res.value, res.lam, True, True, f"{len(grid)} grid points"))
        elif kind == "bernstein-optimized":
            res = B.evaluate_bound(B.BoundSpec(kind, beta), kl, t, eps, strict=False)
            oracle = B.bernstein_oracle(kl, t, eps, beta)
            note = "" if res.admissible else (
                f"kl exceeds admissible threshold {B.bernstein_admissible_kl(t, eps, beta):.6g}"
            )
            if res.value < oracle:
                note = (note + "; " if note else "") + "closed form lies below the Bernstein oracle"
            rows.append(CompareRow(kind, res.value if res.admissible else None, None,
                                   bool(res.admissible), True, note))
        elif kind == "hoeffding-optimized":
            rows.append(CompareRow(kind, B.optimized_hoeffding(kl, t, eps, beta), None, True, True))
        elif kind == "hoeffding-oracle":
            res = B.evaluate_bound(B.BoundSpec(kind, beta), kl, t, eps)
            rows.append(CompareRow(kind, res.value, res.lam, True, False, oracle_note))
        else:
            res = B.evaluate_bound(B.BoundSpec(kind, beta), kl, t, eps)
            note = oracle_note if res.admissible else oracle_note + "; lambda* >= 1 (infeasible)"
            rows.append(CompareRow(kind, res.value, res.lam, bool(res.admissible), False, note))
    tradeoff = grid_tradeoff(kl, t, eps, beta, decades=grid_decades) if sweep else []
    return CompareTable(float(kl), int(t), float(eps), float(beta), rows, grid, tradeoff)
