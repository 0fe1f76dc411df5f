"""Revealing-probability schedules {p_t} and their cumulative masses.

A schedule maps each time t >= 1 to the probability that the player at t
reveals their private signal.  Schedules are immutable and evaluate lazily
at any horizon.  The `optimal_schedule` family scales the learning-rate
constant by (a+b)/b and decays like 1/t, clipped at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import model
from .errors import DomainError, ScheduleParseError

__all__ = [
    "Schedule",
    "OptimalSchedule",
    "PowerSchedule",
    "ConstantSchedule",
    "ZeroSchedule",
    "ExplicitSchedule",
    "optimal_schedule",
    "power_schedule",
    "cumulative_mass",
    "tau",
    "parse_schedule",
]


class Schedule:
    """Base class; subclasses implement `evaluate` (and `evaluate_exact`
    when the schedule takes exactly rational values)."""

    def evaluate(self, t: int) -> float:
        raise NotImplementedError

    def evaluate_exact(self, t: int) -> Fraction:
        """Exact rational value of p_t, for the exact-rational engine mode.

        Raises DomainError for families without an exact rational form.
        """
        raise DomainError(f"{type(self).__name__} has no exact rational form")

    def spec_string(self) -> str:
        """Round-trippable CLI representation of this schedule."""
        raise NotImplementedError

    @staticmethod
    def _check_t(t: int) -> None:
        if t < 1:
            raise DomainError(f"time index must be >= 1, got {t}")


@dataclass(frozen=True)
class OptimalSchedule(Schedule):
    """p_t = min((1+eps) * ((a+b)/b) * kappa_star / t, 1)."""

    params: model.UrnParams
    epsilon: float
    coefficient: float = field(init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        coef = (
            (1.0 + self.epsilon)
            * (self.params.a + self.params.b)
            / self.params.b
            * model.kappa_star(self.params)
        )
        object.__setattr__(self, "coefficient", coef)

    def evaluate(self, t: int) -> float:
        self._check_t(t)
        return min(self.coefficient / t, 1.0)

    def spec_string(self) -> str:
        return f"optimal:eps={self.epsilon!r}"


@dataclass(frozen=True)
class PowerSchedule(Schedule):
    """p_t = min(c / t^alpha, 1)."""

    c: float
    alpha: float

    def __post_init__(self):
        if self.c < 0:
            raise DomainError(f"coefficient must be >= 0, got {self.c}")

    def evaluate(self, t: int) -> float:
        self._check_t(t)
        if self.c == 0.0:
            return 0.0
        return min(self.c / float(t) ** self.alpha, 1.0)

    def evaluate_exact(self, t: int) -> Fraction:
        self._check_t(t)
        alpha = self.alpha
        if alpha != int(alpha):
            raise DomainError("power schedule is exactly rational only for integer exponents")
        value = Fraction(self.c) / Fraction(t) ** int(alpha)
        return min(value, Fraction(1))

    def spec_string(self) -> str:
        return f"power:c={self.c!r},alpha={self.alpha!r}"


@dataclass(frozen=True)
class ConstantSchedule(Schedule):
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"constant probability must lie in [0, 1], got {self.p}")

    def evaluate(self, t: int) -> float:
        self._check_t(t)
        return self.p

    def evaluate_exact(self, t: int) -> Fraction:
        self._check_t(t)
        return Fraction(self.p)

    def spec_string(self) -> str:
        return f"const:p={self.p!r}"


@dataclass(frozen=True)
class ZeroSchedule(Schedule):
    def evaluate(self, t: int) -> float:
        self._check_t(t)
        return 0.0

    def evaluate_exact(self, t: int) -> Fraction:
        self._check_t(t)
        return Fraction(0)

    def spec_string(self) -> str:
        return "zero"


@dataclass(frozen=True)
class ExplicitSchedule(Schedule):
    """A stored prefix of probabilities; `tail` applies beyond it."""

    values: tuple[float, ...]
    tail: float = 0.0

    def __post_init__(self):
        for i, v in enumerate(self.values):
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"p_{i + 1} = {v} lies outside [0, 1]")
        if not 0.0 <= self.tail <= 1.0:
            raise DomainError(f"tail value {self.tail} lies outside [0, 1]")

    def evaluate(self, t: int) -> float:
        self._check_t(t)
        return self.values[t - 1] if t <= len(self.values) else self.tail

    def evaluate_exact(self, t: int) -> Fraction:
        return Fraction(self.evaluate(t))

    def spec_string(self) -> str:
        raise DomainError("explicit schedules round-trip through their source file, not a spec string")


def optimal_schedule(params: model.UrnParams, epsilon: float = 0.1) -> OptimalSchedule:
    return OptimalSchedule(params, epsilon)


def power_schedule(c: float, alpha: float) -> PowerSchedule:
    return PowerSchedule(c, alpha)


def cumulative_mass(schedule: Schedule, t: int) -> float:
    """M_t = sum of p_i for i = 1..t, by direct compensated summation."""
    Schedule._check_t(t)
    # math.fsum is exactly rounded, comfortably under the 1e-10 error
    # budget even at t = 1e7.
    return math.fsum(schedule.evaluate(i) for i in range(1, t + 1))


def tau(schedule: Schedule, s: float, t_cap: int) -> int | None:
    """Smallest t <= t_cap with M_t >= s, or None when never reached."""
    if s < 0:
        raise DomainError(f"threshold must be >= 0, got {s}")
    Schedule._check_t(t_cap)
    total = 0.0
    comp = 0.0
    for t in range(1, t_cap + 1):
        # Kahan update keeps the running mass accurate over long horizons.
        y = schedule.evaluate(t) - comp
        new = total + y
        comp = (new - total) - y
        total = new
        if total >= s:
            return t
    return None


def _parse_kv(body: str, spec: str) -> dict[str, str]:
    out = {}
    for piece in body.split(","):
        if "=" not in piece:
            raise ScheduleParseError(f"expected key=value in schedule spec {spec!r}")
        key, _, value = piece.partition("=")
        out[key.strip()] = value.strip()
    return out


def _parse_number(text: str, spec: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ScheduleParseError(f"bad numeric value {text!r} in schedule spec {spec!r}") from None
    if not math.isfinite(value):
        raise ScheduleParseError(f"non-finite value {text!r} in schedule spec {spec!r}")
    return value


def parse_schedule(spec: str, params: model.UrnParams | None = None) -> Schedule:
    """Build a schedule from its CLI string form.

    Grammar: "optimal:eps=0.1", "power:c=0.5,alpha=1", "const:p=0.2",
    "zero", "file:<path>".  The optimal family needs urn params.  Schedule
    files hold one decimal per line for t = 1, 2, ...; values outside
    [0, 1] are a parse error.
    """
    spec = spec.strip()
    if spec == "zero":
        return ZeroSchedule()
    head, sep, body = spec.partition(":")
    if not sep:
        raise ScheduleParseError(f"unrecognized schedule spec {spec!r}")
    if head == "optimal":
        kv = _parse_kv(body, spec)
        if set(kv) != {"eps"}:
            raise ScheduleParseError(f"optimal schedule takes exactly eps=..., got {spec!r}")
        if params is None:
            raise ScheduleParseError("optimal schedule requires urn parameters")
        try:
            return OptimalSchedule(params, _parse_number(kv["eps"], spec))
        except DomainError as exc:
            raise ScheduleParseError(str(exc)) from None
    if head == "power":
        kv = _parse_kv(body, spec)
        if set(kv) != {"c", "alpha"}:
            raise ScheduleParseError(f"power schedule takes c=...,alpha=..., got {spec!r}")
        try:
            return PowerSchedule(_parse_number(kv["c"], spec), _parse_number(kv["alpha"], spec))
        except DomainError as exc:
            raise ScheduleParseError(str(exc)) from None
    if head == "const":
        kv = _parse_kv(body, spec)
        if set(kv) != {"p"}:
            raise ScheduleParseError(f"const schedule takes exactly p=..., got {spec!r}")
        try:
            return ConstantSchedule(_parse_number(kv["p"], spec))
        except DomainError as exc:
            raise ScheduleParseError(str(exc)) from None
    if head == "file":
        return _load_schedule_file(body)
    raise ScheduleParseError(f"unrecognized schedule family {head!r}")


def _load_schedule_file(path: str) -> ExplicitSchedule:
    values = []
    try:
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                text = line.strip()
                if not text:
                    continue
                try:
                    value = float(text)
                except ValueError:
                    raise ScheduleParseError(f"{path}:{lineno}: not a decimal: {text!r}") from None
                if not 0.0 <= value <= 1.0:
                    raise ScheduleParseError(f"{path}:{lineno}: value {value} outside [0, 1]")
                values.append(value)
    except OSError as exc:
        raise ScheduleParseError(f"cannot read schedule file {path}: {exc}") from None
    return ExplicitSchedule(tuple(values))
