"""Sequential social learning with occasional signal revealers.

Simulates, and exactly analyzes, a sequence of players who guess a hidden
binary state from a private urn draw and the guesses of everyone before
them.  Most players guess by maximum a posteriori; each player t instead
reveals their private signal with probability p_t.  The package computes
per-player error probabilities exactly (dynamic programming on the public
likelihood ratio, with a brute-force enumeration oracle), estimates them
by reproducible Monte Carlo, and evaluates the closed-form learning-rate
constants and the revealing schedules that attain them.
"""

from .analysis import (
    DiagnosticsReport,
    RateFit,
    fit_rate,
    heuristic_tv_curve,
    poisson_tv,
    verify_identities,
)
from .errors import (
    CascadeLabError,
    DomainError,
    ImpossibleOutcomeError,
    NearDegenerateError,
    NonPositiveParamsError,
    NotMajorityError,
    ResourceLimitError,
    ScheduleParseError,
)
from .exact import (
    ErrorSeries,
    Mode,
    RatioDistribution,
    StepOptions,
    enumerate_oracle,
    error_series,
    init_distribution,
    map_error,
    step,
)
from .model import (
    Regime,
    UrnParams,
    action_probs,
    classify,
    conditional_moment,
    decide,
    f_lambda,
    kappa_star,
    lambda_star,
    log_update_factor,
    signal_error_prob,
    signal_likelihood,
    validate_params,
)
from .montecarlo import (
    ErrorEstimate,
    TrajectoryRecord,
    derive_stream,
    estimate_errors,
    simulate_trajectory,
)
from .schedules import (
    ConstantSchedule,
    ExplicitSchedule,
    OptimalSchedule,
    PowerSchedule,
    Schedule,
    ZeroSchedule,
    cumulative_mass,
    optimal_schedule,
    parse_schedule,
    power_schedule,
    tau,
)

__version__ = "0.1.0"
