"""PAC-Bayes certified off-policy evaluation for logged bandit data."""

from .bounds import (
    BoundResult,
    BoundSpec,
    bernstein_admissible_kl,
    bernstein_oracle,
    bernstein_parametric,
    envelope_gap,
    evaluate_bound,
    hoeffding_grid_union,
    hoeffding_oracle,
    hoeffding_parametric,
    optimized_bernstein,
    optimized_hoeffding,
    oracle_lambda_bernstein,
    oracle_lambda_hoeffding,
)
from .core import (
    ActionSpace,
    ContextSpace,
    History,
    LoggedStep,
    Policy,
    RewardModel,
    epsilon_floor_policy,
    kl_divergence,
    load_history,
    save_history,
    true_expected_reward,
)
from .estimators import (
    contextual_is_estimate,
    contextual_policy_estimate,
    conditional_variance_step,
    is_estimate_action,
    is_estimate_policy,
    martingale_difference,
)
from .optimizer import Certificate, certify, gibbs_policy, optimize_policy
from .simulator import SimConfig, generate_history, replicate

__version__ = "0.1.0"
