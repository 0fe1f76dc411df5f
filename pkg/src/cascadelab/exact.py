"""Exact error series via dynamic programming on the public ratio's law.

The engine tracks the distribution of the public log-likelihood ratio
under state 1 only; the state-2 law is recoverable state by state because
a history with ratio R has exactly 1/R times its state-1 probability, and
the model is symmetric in the two states.  Two modes are supported:

* float mode: log-space arithmetic with tolerance-based state merging and
  a mass floor below which states are dropped.  Dropped mass accumulates
  in `pruned_mass`, so every reported probability carries a rigorous
  error bar.
* rational mode: exact big-rational arithmetic on the ratio itself,
  feasible for short horizons with exactly rational schedules.  This is
  the ground-truth mode for small-instance tests.

`enumerate_oracle` recomputes the same series by brute force over all
action sequences, deriving every probability from the agent definitions
alone (revealers echo their signal, rational guessers compare posterior
likelihoods, ties break toward the signal).  It shares no code path with
the dynamic program and serves as its independent check.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import model
from .errors import DomainError, ResourceLimitError
from .model import Regime, UrnParams
from .schedules import Schedule

ENUMERATION_CAP = 24  # 2^24 action sequences keeps the oracle tractable


class Mode(enum.Enum):
    FLOAT = "float"
    RATIONAL = "rational"


@dataclass(frozen=True)
class StepOptions:
    """Tuning knobs for the float-mode dynamic program.

    merge_tol is an absolute log-space tolerance: it sits well above float
    noise and far below the regime boundary scale log(a/b), so lattice
    states merge exactly and off-lattice drift states only merge when
    indistinguishable.  prune_floor bounds state growth; everything it
    drops is accounted in pruned_mass.
    """

    merge_tol: float = 1e-9
    prune_floor: float = 1e-15
    max_states: int = 5_000_000

    def __post_init__(self):
        if self.merge_tol < 0 or self.prune_floor < 0:
            raise DomainError("merge_tol and prune_floor must be >= 0")
        if self.max_states < 1:
            raise DomainError("max_states must be >= 1")


@dataclass(frozen=True)
class RatioDistribution:
    """Law of the public log ratio at one time, under state 1.

    Float mode stores parallel arrays sorted by log ratio.  Rational mode
    additionally stores the exact (ratio, mass) pairs; the float arrays
    are derived views for reporting.
    """

    t: int
    mode: Mode
    log_ratios: np.ndarray
    masses: np.ndarray
    pruned_mass: float | Fraction
    pruned_theta2_mass: float | Fraction
    exact_states: tuple[tuple[Fraction, Fraction], ...] | None = None

    @property
    def n_states(self) -> int:
        return int(self.log_ratios.size)

    def total_mass(self):
        if self.mode is Mode.RATIONAL:
            return sum((m for _, m in self.exact_states), Fraction(0))
        return float(np.sum(self.masses))


def _rational_dist(
    t: int,
    states: dict[Fraction, Fraction],
    pruned: Fraction,
    pruned_t2: Fraction,
) -> RatioDistribution:
    ordered = tuple(sorted(states.items()))
    logs = np.array(
        [math.log(r.numerator) - math.log(r.denominator) for r, _ in ordered], dtype=float
    )
    masses = np.array([float(m) for _, m in ordered], dtype=float)
    return RatioDistribution(
        t=t,
        mode=Mode.RATIONAL,
        log_ratios=logs,
        masses=masses,
        pruned_mass=pruned,
        pruned_theta2_mass=pruned_t2,
        exact_states=ordered,
    )


def init_distribution(mode: Mode = Mode.FLOAT) -> RatioDistribution:
    """Unit mass at ratio 1 (log ratio 0), before any player has acted."""
    if mode is Mode.RATIONAL:
        return _rational_dist(0, {Fraction(1): Fraction(1)}, Fraction(0), Fraction(0))
    return RatioDistribution(
        t=0,
        mode=Mode.FLOAT,
        log_ratios=np.zeros(1),
        masses=np.ones(1),
        pruned_mass=0.0,
        pruned_theta2_mass=0.0,
    )


def _regime_masks(log_ratios: np.ndarray, params: UrnParams):
    edge = params.log_ratio
    tol = model.BOUNDARY_TOL
    down = log_ratios < -edge - tol
    up = log_ratios > edge + tol
    return down, ~(down | up), up


@dataclass(frozen=True)
class RegimeMasses:
    """State-1 mass in each regime, plus derived error quantities."""

    down: float | Fraction
    social: float | Fraction
    up: float | Fraction

    @property
    def social_or_down(self):
        return self.down + self.social


def regime_masses(dist: RatioDistribution, params: UrnParams) -> RegimeMasses:
    if dist.mode is Mode.RATIONAL:
        fa, fb = Fraction(params.a), Fraction(params.b)
        lo_edge, hi_edge = fb / fa, fa / fb
        down = social = up = Fraction(0)
        for ratio, mass in dist.exact_states:
            if ratio < lo_edge:
                down += mass
            elif ratio > hi_edge:
                up += mass
            else:
                social += mass
        return RegimeMasses(down, social, up)
    d_mask, s_mask, u_mask = _regime_masks(dist.log_ratios, params)
    m = dist.masses
    return RegimeMasses(
        float(np.sum(m[d_mask])),
        float(np.sum(m[s_mask])),
        float(np.sum(m[u_mask])),
    )


def map_error(dist: RatioDistribution, params: UrnParams) -> float | Fraction:
    """Probability the next rational guess is wrong, given this ratio law.

    Wrong with certainty in a down cascade, with the signal-error
    probability in the social regime, and never in an up cascade.  The
    reported value is accurate to +- pruned_mass.
    """
    masses = regime_masses(dist, params)
    if dist.mode is Mode.RATIONAL:
        fa, fb = Fraction(params.a), Fraction(params.b)
        return masses.down + fb / (fa + fb) * masses.social
    return masses.down + params.p_disagree * masses.social


def _theta2_mass(log_ratios: np.ndarray, masses: np.ndarray) -> float:
    # State-2 mass of each state is m * exp(-J); evaluated in log space so
    # deeply negative J cannot overflow the exponential.
    if log_ratios.size == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        return float(np.exp(np.log(masses) - log_ratios).sum())


def martingale_residual(dist: RatioDistribution) -> float | Fraction:
    """|E[1/R] - 1| with the dropped states' exact contribution restored.

    The inverse ratio is a martingale under state 1, so this residual
    measures only accumulated arithmetic error.
    """
    if dist.mode is Mode.RATIONAL:
        total = sum((m / r for r, m in dist.exact_states), Fraction(0))
        return abs(total + dist.pruned_theta2_mass - 1)
    return abs(_theta2_mass(dist.log_ratios, dist.masses) + dist.pruned_theta2_mass - 1.0)


def _merge_two_sorted(j1, m1, j2, m2):
    """Interleave two sorted state arrays into one, in linear time.

    Ties place the second array's entries first; the rule is arbitrary
    but fixed, so the combined order is deterministic.
    """
    n1, n2 = j1.size, j2.size
    if n1 == 0:
        return j2, m2
    if n2 == 0:
        return j1, m1
    pos2 = np.searchsorted(j1, j2, side="left") + np.arange(n2)
    out_j = np.empty(n1 + n2)
    out_m = np.empty(n1 + n2)
    mask = np.ones(n1 + n2, dtype=bool)
    mask[pos2] = False
    out_j[pos2] = j2
    out_m[pos2] = m2
    out_j[mask] = j1
    out_m[mask] = m1
    return out_j, out_m


def _merge_sorted(
    J: np.ndarray,
    m: np.ndarray,
    merge_tol: float,
    lower_edge: float | None = None,
    upper_edge: float | None = None,
):
    """Merge states whose log ratios agree within merge_tol.

    States are grouped by fixed bins of width merge_tol, which merges
    only states within the tolerance and is deterministic without any
    ordering ambiguity.  Groups are additionally split at the regime
    classification edges, so a merge never mixes states from different
    regimes (the social interval is closed, and its endpoint lattice
    states must not be dragged across the edge by nearby cascade dust).
    A merged group keeps its total mass and takes the log ratio that
    preserves the group's state-2 mass exactly,
    J* = J_min + log(sum m / sum m * exp(-(J - J_min))),
    so merging never perturbs the martingale identity.  J* lies within
    the group's span, and a group of identical log ratios keeps its
    value bit for bit, which preserves the exact lattice of
    signal-following steps.
    """
    n = J.size
    if n == 0 or merge_tol <= 0.0:
        return J, m
    keys = np.floor(J / merge_tol)
    boundaries = np.flatnonzero(keys[1:] != keys[:-1]) + 1
    cuts = []
    if lower_edge is not None:
        # Down cascade is J < lower_edge strictly; the edge itself is social.
        cuts.append(np.searchsorted(J, lower_edge, side="left"))
    if upper_edge is not None:
        # Up cascade is J > upper_edge strictly; the edge itself is social.
        cuts.append(np.searchsorted(J, upper_edge, side="right"))
    cuts = [c for c in cuts if 0 < c < n]
    if cuts:
        boundaries = np.unique(np.concatenate((boundaries, np.asarray(cuts, dtype=np.int64))))
    if boundaries.size == n - 1:
        return J, m
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    sizes = ends - starts
    msum = np.add.reduceat(m, starts)
    multi = sizes > 1
    anchors = J[starts]
    spans = J[ends - 1] - anchors
    # Groups with zero span (exact duplicates) keep the anchor exactly:
    # exp(0) = 1 makes the correction log(msum/msum) = 0.
    shifted = np.exp(-(J - np.repeat(anchors, sizes)))
    theta2 = np.add.reduceat(m * shifted, starts)
    with np.errstate(divide="ignore", invalid="ignore"):
        correction = np.log(msum / theta2)
    J_merged = np.where(multi & (spans > 0) & (msum > 0), anchors + correction, anchors)
    return J_merged, msum


def step(
    dist: RatioDistribution,
    schedule: Schedule,
    params: UrnParams,
    opts: StepOptions = StepOptions(),
) -> RatioDistribution:
    """Advance the ratio law by one player.

    Each state branches on the two possible actions with the state-1
    conditional probabilities of its regime; zero-probability branches are
    not generated.  Children are then merged and pruned (float mode) or
    combined exactly (rational mode).
    """
    t = dist.t + 1
    if dist.mode is Mode.RATIONAL:
        return _step_rational(dist, schedule, params, opts, t)

    p = schedule.evaluate(t)
    J, m = dist.log_ratios, dist.masses
    d_mask, s_mask, u_mask = _regime_masks(J, params)
    edge = params.log_ratio
    hi, lo = params.p_agree, params.p_disagree
    drift = math.log1p(-lo * p) - math.log1p(-hi * p)

    # Parents are sorted by log ratio, so every child stream (a regime
    # subset shifted by a constant) is sorted too; interleaving the
    # streams pairwise avoids a global sort.
    streams: list[tuple[np.ndarray, np.ndarray]] = []

    js, ms = J[s_mask], m[s_mask]
    if js.size:
        keep1 = ms * hi
        streams.append((js + edge, keep1))
        streams.append((js - edge, ms - keep1))

    ju, mu = J[u_mask], m[u_mask]
    if ju.size:
        stay = mu * (1.0 - lo * p)
        streams.append((ju + drift, stay))
        if p > 0.0:
            streams.append((ju - edge, mu - stay))

    jd, md = J[d_mask], m[d_mask]
    if jd.size:
        reveal_up = md * (hi * p)
        streams.append((jd - drift, md - reveal_up))
        if p > 0.0:
            streams.append((jd + edge, reveal_up))

    if streams:
        Jc, mc = streams[0]
        for j2, m2 in streams[1:]:
            Jc, mc = _merge_two_sorted(Jc, mc, j2, m2)
        tol = model.BOUNDARY_TOL
        Jc, mc = _merge_sorted(
            Jc, mc, opts.merge_tol, lower_edge=-edge - tol, upper_edge=edge + tol
        )
    else:
        Jc = np.empty(0)
        mc = np.empty(0)

    pruned = float(dist.pruned_mass)
    pruned_t2 = float(dist.pruned_theta2_mass)
    if opts.prune_floor > 0.0 and Jc.size:
        keep = mc >= opts.prune_floor
        if not keep.all():
            dropped_j = Jc[~keep]
            dropped_m = mc[~keep]
            pruned += math.fsum(dropped_m.tolist())
            pruned_t2 += _theta2_mass(dropped_j, dropped_m)
            Jc, mc = Jc[keep], mc[keep]

    if Jc.size > opts.max_states:
        raise ResourceLimitError(
            f"state count {Jc.size} exceeds cap {opts.max_states} at t={t}"
        )
    return RatioDistribution(
        t=t,
        mode=Mode.FLOAT,
        log_ratios=Jc,
        masses=mc,
        pruned_mass=pruned,
        pruned_theta2_mass=pruned_t2,
    )


def _step_rational(
    dist: RatioDistribution,
    schedule: Schedule,
    params: UrnParams,
    opts: StepOptions,
    t: int,
) -> RatioDistribution:
    p = schedule.evaluate_exact(t)
    fa, fb = Fraction(params.a), Fraction(params.b)
    total = fa + fb
    hi, lo = fa / total, fb / total
    lo_edge, hi_edge = fb / fa, fa / fb
    up_factor = fa / fb
    children: dict[Fraction, Fraction] = {}

    def add(ratio: Fraction, mass: Fraction) -> None:
        children[ratio] = children.get(ratio, Fraction(0)) + mass

    for ratio, mass in dist.exact_states:
        if ratio < lo_edge:
            stay_prob = 1 - hi * p
            add(ratio * (1 - hi * p) / (1 - lo * p), mass * stay_prob)
            if p > 0:
                add(ratio * up_factor, mass * (1 - stay_prob))
        elif ratio > hi_edge:
            stay_prob = 1 - lo * p
            add(ratio * (1 - lo * p) / (1 - hi * p), mass * stay_prob)
            if p > 0:
                add(ratio / up_factor, mass * (1 - stay_prob))
        else:
            add(ratio * up_factor, mass * hi)
            add(ratio / up_factor, mass * lo)

    pruned = dist.pruned_mass
    pruned_t2 = dist.pruned_theta2_mass
    if opts.prune_floor > 0:
        floor = Fraction(opts.prune_floor)
        dropped = [(r, m) for r, m in children.items() if m < floor]
        for r, m in dropped:
            del children[r]
            pruned += m
            pruned_t2 += m / r
    if len(children) > opts.max_states:
        raise ResourceLimitError(
            f"state count {len(children)} exceeds cap {opts.max_states} at t={t}"
        )
    return _rational_dist(t, children, pruned, pruned_t2)


@dataclass
class ErrorSeries:
    """Per-player error quantities for t = 1..t_max.

    All per-t sequences are lists indexed by t-1.  In rational mode the
    probabilistic entries are exact Fractions.  prob_cascade_down and
    prob_social_or_down describe the time-t ratio law, so the bounds on
    the rational guess at time t come from index t-2 (the time t-1 law).
    """

    t_max: int
    mode: Mode
    params: UrnParams | None = None
    p_t: list = field(default_factory=list)
    map_error: list = field(default_factory=list)
    e_t: list = field(default_factory=list)
    te_t: list = field(default_factory=list)
    ne_t: list = field(default_factory=list)
    prob_cascade_down: list = field(default_factory=list)
    prob_social_or_down: list = field(default_factory=list)
    martingale_residual: list = field(default_factory=list)
    pruned_mass: list = field(default_factory=list)
    pruned_theta2_mass: list = field(default_factory=list)
    mass_residual: list = field(default_factory=list)
    max_states: int = 0
    final_states: int = 0

    def e_t_floats(self) -> np.ndarray:
        return np.array([float(e) for e in self.e_t])

    def csv_row(self, t: int) -> list:
        i = t - 1
        return [
            t,
            self.p_t[i],
            self.map_error[i],
            self.e_t[i],
            self.te_t[i],
            self.ne_t[i],
            self.prob_cascade_down[i],
            self.prob_social_or_down[i],
            self.martingale_residual[i],
            self.pruned_mass[i],
        ]


def error_series(
    params: UrnParams,
    schedule: Schedule,
    t_max: int,
    opts: StepOptions = StepOptions(),
    mode: Mode = Mode.FLOAT,
) -> ErrorSeries:
    """Run the dynamic program for t = 1..t_max and collect the series.

    The guess-error column at time t is computed from the time t-1 ratio
    law, then combined with the revealing probability:
    E_t = map_error_t * (1 - p_t) + (b/(a+b)) * p_t.
    """
    if t_max < 1:
        raise DomainError(f"t_max must be >= 1, got {t_max}")
    series = ErrorSeries(t_max=t_max, mode=mode, params=params)
    dist = init_distribution(mode)
    if mode is Mode.RATIONAL:
        fa, fb = Fraction(params.a), Fraction(params.b)
        wrong_signal = fb / (fa + fb)
        one = Fraction(1)
        running = Fraction(0)
    else:
        wrong_signal = params.p_disagree
        one = 1.0
        running = 0.0
    prev = regime_masses(dist, params)
    for t in range(1, t_max + 1):
        p = schedule.evaluate_exact(t) if mode is Mode.RATIONAL else schedule.evaluate(t)
        me = prev.down + wrong_signal * prev.social
        e = me * (one - p) + wrong_signal * p
        running = running + e
        dist = step(dist, schedule, params, opts)
        cur = regime_masses(dist, params)
        series.p_t.append(p)
        series.map_error.append(me)
        series.e_t.append(e)
        series.te_t.append(t * e)
        series.ne_t.append(running)
        series.prob_cascade_down.append(cur.down)
        series.prob_social_or_down.append(cur.down + cur.social)
        series.martingale_residual.append(martingale_residual(dist))
        series.pruned_mass.append(dist.pruned_mass)
        series.pruned_theta2_mass.append(dist.pruned_theta2_mass)
        series.mass_residual.append(abs(dist.total_mass() + dist.pruned_mass - one))
        series.max_states = max(series.max_states, dist.n_states)
        prev = cur
    series.final_states = dist.n_states
    return series


def enumerate_oracle(
    params: UrnParams,
    schedule: Schedule,
    t_max: int,
    mode: Mode = Mode.FLOAT,
) -> ErrorSeries:
    """Recompute the error series by summing over every action sequence.

    Works entirely in integer arithmetic on scaled likelihoods: each
    history carries exact integer numerators for its probability under
    either state, over a per-depth common denominator.  The guess of a
    rational player is found by comparing the two posterior likelihoods
    directly (ties follow the private signal), so this path exercises the
    base definitions rather than the regime shortcut used by the dynamic
    program.  Pruned mass is identically zero.
    """
    if t_max < 1:
        raise DomainError(f"t_max must be >= 1, got {t_max}")
    if t_max > ENUMERATION_CAP:
        raise DomainError(f"enumeration supports t_max <= {ENUMERATION_CAP}, got {t_max}")

    fa, fb = Fraction(params.a), Fraction(params.b)
    # Integerize the signal likelihoods: both are over the denominator A+B.
    A = fa.numerator * fb.denominator
    B = fb.numerator * fa.denominator
    den = A + B

    if mode is Mode.RATIONAL:
        ps = [schedule.evaluate_exact(t) for t in range(1, t_max + 1)]
    else:
        ps = [Fraction(schedule.evaluate(t)) for t in range(1, t_max + 1)]
    pn = [p.numerator for p in ps]
    pd = [p.denominator for p in ps]

    # denom_at[d] scales all depth-d likelihood numerators.
    denom_at = [1]
    for t in range(1, t_max + 1):
        denom_at.append(denom_at[-1] * den * pd[t - 1])

    map_num = [0] * (t_max + 1)
    e_num = [0] * (t_max + 1)
    down_num = [0] * (t_max + 1)
    socdown_num = [0] * (t_max + 1)
    l1_num = [0] * (t_max + 1)
    l2_num = [0] * (t_max + 1)

    def guess(l1: int, l2: int, signal: int) -> int:
        # Posterior comparison with the signal folded in; tie -> signal.
        if signal == 1:
            d1, d2 = l1 * A, l2 * B
        else:
            d1, d2 = l1 * B, l2 * A
        if d1 > d2:
            return 1
        if d1 < d2:
            return 2
        return signal

    def visit(depth: int, l1: int, l2: int) -> None:
        if depth >= 1:
            # Classify this history's ratio L1/L2 against b/a and a/b.
            if l1 * A < l2 * B:
                down_num[depth] += l1
                socdown_num[depth] += l1
            elif l1 * B <= l2 * A:
                socdown_num[depth] += l1
            l1_num[depth] += l1
            l2_num[depth] += l2
        if depth == t_max:
            return
        t = depth + 1
        pnum, pden = pn[t - 1], pd[t - 1]
        g1 = guess(l1, l2, 1)
        g2 = guess(l1, l2, 2)
        map_num[t] += l1 * (A * (g1 == 2) + B * (g2 == 2))
        stay = pden - pnum
        n1_act1 = A * (pnum + stay * (g1 == 1)) + B * (stay * (g2 == 1))
        n1_act2 = A * (stay * (g1 == 2)) + B * (pnum + stay * (g2 == 2))
        n2_act1 = B * (pnum + stay * (g1 == 1)) + A * (stay * (g2 == 1))
        n2_act2 = B * (stay * (g1 == 2)) + A * (pnum + stay * (g2 == 2))
        e_num[t] += l1 * n1_act2
        if n1_act1 > 0:
            visit(t, l1 * n1_act1, l2 * n2_act1)
        if n1_act2 > 0:
            visit(t, l1 * n1_act2, l2 * n2_act2)

    visit(0, 1, 1)

    series = ErrorSeries(t_max=t_max, mode=mode, params=params, max_states=0, final_states=0)
    exact = mode is Mode.RATIONAL

    def emit(num: int, scale: int):
        value = Fraction(num, scale)
        return value if exact else float(value)

    running = Fraction(0) if exact else 0.0
    zero = Fraction(0) if exact else 0.0
    for t in range(1, t_max + 1):
        p = ps[t - 1] if exact else float(ps[t - 1])
        me = emit(map_num[t], denom_at[t - 1] * den)
        e = emit(e_num[t], denom_at[t])
        running = running + e
        series.p_t.append(p)
        series.map_error.append(me)
        series.e_t.append(e)
        series.te_t.append(t * e)
        series.ne_t.append(running)
        series.prob_cascade_down.append(emit(down_num[t], denom_at[t]))
        series.prob_social_or_down.append(emit(socdown_num[t], denom_at[t]))
        residual = abs(Fraction(l2_num[t], denom_at[t]) - 1)
        series.martingale_residual.append(residual if exact else float(residual))
        series.pruned_mass.append(zero)
        series.pruned_theta2_mass.append(zero)
        mass_res = abs(Fraction(l1_num[t], denom_at[t]) - 1)
        series.mass_residual.append(mass_res if exact else float(mass_res))
    return series
