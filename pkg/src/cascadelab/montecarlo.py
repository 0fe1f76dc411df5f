"""Trajectory simulation with reproducible, worker-count-independent output.

Every trial owns a counter-based random stream derived from the master
seed and the trial index, so trial i is the same no matter which worker
runs it or in what order.  Error tallies are integer counts reduced by
addition, which makes the final result bit-identical for any degree of
parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from . import model
from .errors import DomainError
from .model import UrnParams
from .schedules import Schedule

_MASK64 = (1 << 64) - 1


def derive_stream(master_seed: int, trial_index: int) -> np.random.Generator:
    """Deterministic, statistically independent stream for one trial.

    Philox is a counter-based generator keyed on 128 bits; packing the
    master seed into the high word and the trial index into the low word
    gives the same stream for the same pair, always, and unrelated
    streams for distinct pairs.
    """
    if trial_index < 0:
        raise DomainError(f"trial index must be >= 0, got {trial_index}")
    key = ((master_seed & _MASK64) << 64) | (trial_index & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated run of the full generative model."""

    theta: int
    signals: np.ndarray
    revealer_flags: np.ndarray
    actions: np.ndarray
    log_ratios: np.ndarray  # J_t after each step; J_0 = 0 is implicit
    errors: np.ndarray

    @property
    def t_max(self) -> int:
        return int(self.signals.size)


def simulate_trajectory(
    params: UrnParams,
    schedule: Schedule,
    theta: int,
    t_max: int,
    stream: np.random.Generator,
) -> TrajectoryRecord:
    """Simulate one run, consuming exactly two uniforms per step.

    The draw order per step is fixed (signal first, then the revealer
    flag) so streams line up across implementations and across the scalar
    and vectorized paths.
    """
    if theta not in (1, 2):
        raise DomainError(f"theta must be 1 or 2, got {theta}")
    if t_max < 1:
        raise DomainError(f"t_max must be >= 1, got {t_max}")
    u = stream.random(2 * t_max)
    signals = np.empty(t_max, dtype=np.int8)
    flags = np.empty(t_max, dtype=bool)
    actions = np.empty(t_max, dtype=np.int8)
    log_ratios = np.empty(t_max, dtype=float)
    j = 0.0
    agree = params.p_agree
    for t in range(1, t_max + 1):
        x = theta if u[2 * (t - 1)] < agree else 3 - theta
        p = schedule.evaluate(t)
        revealer = bool(u[2 * (t - 1) + 1] < p)
        regime = model.classify(j, params)
        z = model.decide(regime, x, revealer)
        j += model.log_update_factor(regime, z, p, params)
        signals[t - 1] = x
        flags[t - 1] = revealer
        actions[t - 1] = z
        log_ratios[t - 1] = j
    return TrajectoryRecord(
        theta=theta,
        signals=signals,
        revealer_flags=flags,
        actions=actions,
        log_ratios=log_ratios,
        errors=actions != theta,
    )


@dataclass(frozen=True)
class ErrorEstimate:
    """Integer error counts per time step over independent trials."""

    counts: np.ndarray
    trials: int

    @property
    def mean(self) -> np.ndarray:
        return self.counts / self.trials

    @property
    def stderr(self) -> np.ndarray:
        m = self.mean
        return np.sqrt(m * (1.0 - m) / self.trials)


def _count_chunk(args) -> np.ndarray:
    (params, schedule, t_max, master_seed, start, stop, stratified, trials) = args
    n = stop - start
    cols = 2 * t_max + (0 if stratified else 1)
    u = np.empty((n, cols))
    for i in range(n):
        u[i] = derive_stream(master_seed, start + i).random(cols)
    if stratified:
        half = (trials + 1) // 2
        theta = np.where(np.arange(start, stop) < half, 1, 2).astype(np.int8)
        offset = 0
    else:
        theta = np.where(u[:, 0] < 0.5, 1, 2).astype(np.int8)
        offset = 1

    edge = params.log_ratio
    tol = model.BOUNDARY_TOL
    agree, disagree = params.p_agree, params.p_disagree
    j = np.zeros(n)
    counts = np.zeros(t_max, dtype=np.int64)
    for t in range(1, t_max + 1):
        p = schedule.evaluate(t)
        x = np.where(u[:, offset + 2 * (t - 1)] < agree, theta, 3 - theta)
        revealer = u[:, offset + 2 * (t - 1) + 1] < p
        up = j > edge + tol
        down = j < -edge - tol
        z = np.where(revealer, x, np.where(up, 1, np.where(down, 2, x)))
        drift = math.log1p(-disagree * p) - math.log1p(-agree * p)
        move = np.where(
            up,
            np.where(z == 1, drift, -edge),
            np.where(down, np.where(z == 1, edge, -drift), np.where(z == 1, edge, -edge)),
        )
        j = j + move
        counts[t - 1] += np.count_nonzero(z != theta)
    return counts


def estimate_errors(
    params: UrnParams,
    schedule: Schedule,
    t_max: int,
    trials: int,
    master_seed: int,
    workers: int = 1,
    stratified: bool = False,
    chunk_size: int = 4096,
) -> ErrorEstimate:
    """Monte Carlo estimate of the per-player error probabilities.

    By default the state of the world is drawn uniformly per trial, which
    costs one extra variate before the first step.  The stratified option
    instead assigns state 1 to the first half of the trial indices and
    state 2 to the rest, exploiting the model's symmetry; it consumes no
    state variate.  Output depends only on (master_seed, trials) and the
    model arguments, never on workers or chunking.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    chunks = [
        (params, schedule, t_max, master_seed, start, min(start + chunk_size, trials), stratified, trials)
        for start in range(0, trials, chunk_size)
    ]
    if workers == 1 or len(chunks) == 1:
        partials = [_count_chunk(c) for c in chunks]
    else:
        with Pool(processes=workers) as pool:
            partials = pool.map(_count_chunk, chunks)
    counts = np.zeros(t_max, dtype=np.int64)
    for part in partials:
        counts += part
    return ErrorEstimate(counts=counts, trials=trials)
