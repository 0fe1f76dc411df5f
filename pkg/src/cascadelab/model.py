"""Urn signal model: closed-form constants, regimes, and the one-step action law.

The state of the world is one of {1, 2}.  An urn holds weight ``a`` of the
true type and weight ``b`` of the other, so every private signal agrees
with the state with probability a/(a+b).  Players either reveal their
signal or guess by maximum a posteriori; which of the two they do, and the
resulting update of the public log-likelihood ratio, depends only on a
three-way classification of that ratio.  Everything in this module is a
pure function of its arguments.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import (
    DomainError,
    ImpossibleOutcomeError,
    NearDegenerateError,
    NonPositiveParamsError,
    NotMajorityError,
)

# Absolute tolerance, in log space, for classifying a ratio that sits on a
# regime boundary.  Keeps float and exact-rational runs consistent on
# lattice points like R = a/b.
BOUNDARY_TOL = 1e-12

# The rate constant diverges as a/b -> 1; refuse ratios below this margin.
MIN_RATIO_MARGIN = 1e-9


@dataclass(frozen=True)
class UrnParams:
    """Signal model weights, with a > b > 0.

    Only the ratio a/b matters for the dynamics, so arbitrary positive
    reals are accepted, not just integer ball counts.
    """

    a: float
    b: float

    def __post_init__(self):
        a, b = self.a, self.b
        if not (math.isfinite(a) and math.isfinite(b)):
            raise NonPositiveParamsError(f"weights must be finite, got a={a}, b={b}")
        if a <= 0 or b <= 0:
            raise NonPositiveParamsError(f"weights must be positive, got a={a}, b={b}")
        if a <= b:
            raise NotMajorityError(f"majority weight must exceed minority weight, got a={a}, b={b}")
        if a / b < 1.0 + MIN_RATIO_MARGIN:
            raise NearDegenerateError(
                f"a/b = {a / b} is within {MIN_RATIO_MARGIN} of 1; rate constant would diverge"
            )

    @property
    def ratio(self) -> float:
        return self.a / self.b

    @property
    def log_ratio(self) -> float:
        """Natural log of a/b, the lattice step of the public log ratio."""
        return math.log(self.a / self.b)

    @property
    def p_agree(self) -> float:
        """Probability a private signal matches the state of the world."""
        return self.a / (self.a + self.b)

    @property
    def p_disagree(self) -> float:
        return self.b / (self.a + self.b)


def validate_params(a: float, b: float) -> UrnParams:
    """Validate (a, b) and return immutable params.

    Raises NonPositiveParamsError, NotMajorityError, or NearDegenerateError.
    """
    return UrnParams(float(a), float(b))


class Regime(enum.Enum):
    """Three-way classification of the public likelihood ratio R.

    CASCADE_DOWN: R < b/a, rational guessers pick 2 regardless of signal.
    SOCIAL:       b/a <= R <= a/b (closed), rational guessers follow signal.
    CASCADE_UP:   R > a/b, rational guessers pick 1 regardless of signal.
    """

    CASCADE_DOWN = "cascade_down"
    SOCIAL = "social"
    CASCADE_UP = "cascade_up"


def signal_error_prob(params: UrnParams) -> float:
    """Probability b/(a+b) that a private signal disagrees with the state."""
    return params.p_disagree


def signal_likelihood(params: UrnParams, hypothesis: int, signal: int) -> float:
    """Likelihood of observing `signal` when the state is `hypothesis`."""
    if hypothesis not in (1, 2) or signal not in (1, 2):
        raise DomainError(f"hypothesis and signal must be in {{1,2}}, got {hypothesis}, {signal}")
    return params.p_agree if signal == hypothesis else params.p_disagree


def kappa_star(params: UrnParams) -> float:
    """Optimal learning-rate constant: the limiting value of t * error_t.

    With g = (a/b - 1)/log(a/b), equals 1 / (1 + g*(log g - 1)).  Depends
    on the weights only through their ratio.
    """
    r = params.ratio
    g = (r - 1.0) / math.log(r)
    return 1.0 / (1.0 + g * (math.log(g) - 1.0))


def lambda_star(params: UrnParams) -> float:
    """Exponent maximizing the moment gap f_lambda; lies in (1/2, 1)."""
    r = params.ratio
    return math.log((r - 1.0) / math.log(r)) / math.log(r)


def f_lambda(params: UrnParams, lam: float) -> float:
    """Moment gap (lam*a + (1-lam)*b - a^lam b^(1-lam)) / (a+b).

    Concave and nonnegative on [0, 1] with zeros at both endpoints; its
    maximum over lam ties the rate constant to the signal error via
    f(lambda_star) = b / ((a+b) * kappa_star).
    """
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    a, b = params.a, params.b
    return (lam * a + (1.0 - lam) * b - a**lam * b ** (1.0 - lam)) / (a + b)


def classify(log_ratio: float, params: UrnParams, tol: float = BOUNDARY_TOL) -> Regime:
    """Classify a public log-likelihood ratio into its regime.

    The social interval is closed and widened by `tol` on each side so
    that lattice values equal to +-log(a/b) never misclassify under float
    roundoff.  Non-finite inputs are rejected: an impossible-outcome
    transition upstream is a bug, not an infinity to propagate.
    """
    if not math.isfinite(log_ratio):
        raise DomainError(f"log ratio must be finite, got {log_ratio}")
    edge = params.log_ratio
    if log_ratio < -edge - tol:
        return Regime.CASCADE_DOWN
    if log_ratio > edge + tol:
        return Regime.CASCADE_UP
    return Regime.SOCIAL


def decide(regime: Regime, signal: int, is_revealer: bool) -> int:
    """Action of the player at this step.

    Revealers echo their signal.  Rational guessers follow the cascade
    direction in either cascade regime and follow their signal in the
    social regime (which also covers the posterior-tie case, where ties
    break toward the private signal).
    """
    if signal not in (1, 2):
        raise DomainError(f"signal must be 1 or 2, got {signal}")
    if is_revealer:
        return signal
    if regime is Regime.CASCADE_UP:
        return 1
    if regime is Regime.CASCADE_DOWN:
        return 2
    return signal


def action_probs(
    regime: Regime, p_t: float, hypothesis: int, params: UrnParams
) -> tuple[float, float]:
    """Conditional distribution (P(Z=1), P(Z=2)) of the next action.

    `p_t` is the revealing probability at this step and `hypothesis` the
    conditioning state of the world.  Under state 2 the state-1 values
    apply with the roles of a and b (and of the two actions) swapped.
    """
    if not 0.0 <= p_t <= 1.0:
        raise DomainError(f"revealing probability must lie in [0, 1], got {p_t}")
    if hypothesis not in (1, 2):
        raise DomainError(f"hypothesis must be 1 or 2, got {hypothesis}")
    if hypothesis == 1:
        agree, disagree = params.p_agree, params.p_disagree
    else:
        agree, disagree = params.p_disagree, params.p_agree
    # Both components are formed directly so that swapping the hypothesis
    # mirrors the pair bit for bit; the sum is 1 up to one rounding unit.
    if regime is Regime.SOCIAL:
        return (agree, disagree)
    if regime is Regime.CASCADE_UP:
        return (1.0 - disagree * p_t, disagree * p_t)
    return (agree * p_t, 1.0 - agree * p_t)


def log_update_factor(regime: Regime, action: int, p_t: float, params: UrnParams) -> float:
    """Log increment of the public ratio after observing `action`.

    Equals log of the ratio of the action's conditional probabilities
    under the two states.  Signal-following actions move the ratio by
    exactly +-log(a/b); the consensus action in a cascade drifts it by a
    p_t-dependent amount that vanishes at p_t = 0.
    """
    if action not in (1, 2):
        raise DomainError(f"action must be 1 or 2, got {action}")
    if not 0.0 <= p_t <= 1.0:
        raise DomainError(f"revealing probability must lie in [0, 1], got {p_t}")
    edge = params.log_ratio
    if regime is Regime.SOCIAL:
        return edge if action == 1 else -edge
    hi, lo = params.p_agree, params.p_disagree
    if regime is Regime.CASCADE_UP:
        if action == 1:
            return math.log1p(-lo * p_t) - math.log1p(-hi * p_t)
        if p_t == 0.0:
            raise ImpossibleOutcomeError("action 2 has probability zero in an up cascade with p_t = 0")
        return -edge
    # cascade down: mirror image
    if action == 2:
        return math.log1p(-hi * p_t) - math.log1p(-lo * p_t)
    if p_t == 0.0:
        raise ImpossibleOutcomeError("action 1 has probability zero in a down cascade with p_t = 0")
    return edge


def transition_outcomes(
    regime: Regime, p_t: float, params: UrnParams
) -> list[tuple[int, float, float]]:
    """Possible (action, prob under state 1, log increment) triples.

    Zero-probability actions are omitted, so the log increment is always
    defined.  Probabilities sum to one.
    """
    p1, p2 = action_probs(regime, p_t, 1, params)
    out = []
    for action, prob in ((1, p1), (2, p2)):
        if prob > 0.0:
            out.append((action, prob, log_update_factor(regime, action, p_t, params)))
    return out


def conditional_moment(regime: Regime, p_t: float, lam: float, params: UrnParams) -> float:
    """Closed form of E[(R_t/R_{t-1})^(-lam) | regime] under state 1.

    Matches the direct two-outcome expectation over `transition_outcomes`;
    at lam = 1 it equals 1 exactly, which is the martingale property of
    the inverse ratio.
    """
    if not 0.0 <= p_t <= 1.0:
        raise DomainError(f"revealing probability must lie in [0, 1], got {p_t}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    a, b = params.a, params.b
    total = a + b
    hi, lo = params.p_agree, params.p_disagree
    if regime is Regime.SOCIAL:
        return (a ** (1.0 - lam) * b**lam + a**lam * b ** (1.0 - lam)) / total
    if regime is Regime.CASCADE_UP:
        return (a**lam * b ** (1.0 - lam) / total) * p_t + (1.0 - lo * p_t) ** (1.0 - lam) * (
            1.0 - hi * p_t
        ) ** lam
    return (a ** (1.0 - lam) * b**lam / total) * p_t + (1.0 - hi * p_t) ** (1.0 - lam) * (
        1.0 - lo * p_t
    ) ** lam
