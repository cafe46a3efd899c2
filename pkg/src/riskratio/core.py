"""Domain types shared by every estimator and interval method.

Extended reals: ``math.inf`` stands for an infinite risk ratio and the
singleton :data:`UNDEFINED` marks 0/0. NaN is never used to carry meaning.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Union

import numpy as np


class RiskRatioError(Exception):
    """Base class for all library errors."""


class NotComputableError(RiskRatioError):
    """The requested bound cannot be computed for this dataset/method pair."""


class TotalDegeneracyError(NotComputableError):
    """Resampling cannot vary because a scenario has no (or only) events."""


class DegenerateSampleError(RiskRatioError):
    """A raw sample has zero variance where a spread is required."""


class ConvergenceError(RiskRatioError):
    """A likelihood maximization failed to converge."""

    def __init__(self, message: str, rr0: float | None = None):
        super().__init__(message)
        self.rr0 = rr0


class InsufficientExceedancesError(RiskRatioError):
    pass


class InfeasibleSizeError(RiskRatioError):
    """Exact enumeration or table construction too large for the configured cap."""


class _Undefined:
    """Marker for the 0/0 risk ratio."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNDEFINED"

    def __str__(self) -> str:
        return "undefined"

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()

ExtendedReal = Union[float, _Undefined]


def is_undefined(x) -> bool:
    return x is UNDEFINED


class Tail(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


class Side(str, enum.Enum):
    LOWER = "lower_one_sided"
    UPPER = "upper_one_sided"
    TWO_SIDED = "two_sided"

    @classmethod
    def parse(cls, value: "Side | str") -> "Side":
        if isinstance(value, Side):
            return value
        aliases = {
            "lower": cls.LOWER,
            "upper": cls.UPPER,
            "two": cls.TWO_SIDED,
            "two-sided": cls.TWO_SIDED,
            "both": cls.TWO_SIDED,
        }
        if value in aliases:
            return aliases[value]
        return cls(value)


def one_sided_level(level: float, side: Side | str) -> float:
    """Confidence level carried by each computed endpoint.

    A two-sided interval at ``level`` is assembled from two one-sided bounds
    at ``(1 + level) / 2``; a one-sided request uses ``level`` directly.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    side = Side.parse(side)
    if side is Side.TWO_SIDED:
        return 0.5 * (1.0 + level)
    return level


@dataclass(frozen=True)
class BinomialCount:
    events: int
    trials: int

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.events) != self.events or not 0 <= self.events <= self.trials:
            raise ValueError(
                f"events must be an integer in [0, trials], got {self.events!r}")
        object.__setattr__(self, "events", int(self.events))
        object.__setattr__(self, "trials", int(self.trials))

    @property
    def proportion(self) -> float:
        return self.events / self.trials


@dataclass(frozen=True, eq=False)
class RawSample:
    """Per-member values of the analysed variable for one scenario."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).ravel()
        if arr.size < 1:
            raise ValueError("raw sample must contain at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raw sample values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        return isinstance(other, RawSample) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class EventDefinition:
    cutoff: float
    tail: Tail = Tail.UPPER

    def __post_init__(self):
        if not math.isfinite(self.cutoff):
            raise ValueError("cutoff must be finite")
        object.__setattr__(self, "cutoff", float(self.cutoff))
        object.__setattr__(self, "tail", Tail(self.tail))

    def exceeds(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.tail is Tail.UPPER:
            return values > self.cutoff
        return values < self.cutoff

    def oriented(self, values) -> tuple[np.ndarray, float]:
        """Values and cutoff mapped so the event is always an upper-tail exceedance."""
        values = np.asarray(values, dtype=float)
        if self.tail is Tail.UPPER:
            return values, self.cutoff
        return -values, -self.cutoff


Scenario = Union[BinomialCount, RawSample]


@dataclass(frozen=True)
class ScenarioPair:
    factual: Scenario
    counterfactual: Scenario

    def __post_init__(self):
        if type(self.factual) is not type(self.counterfactual):
            raise TypeError("factual and counterfactual must share a representation")
        if not isinstance(self.factual, (BinomialCount, RawSample)):
            raise TypeError("scenarios must be BinomialCount or RawSample")

    @classmethod
    def from_counts(cls, y_f: int, n_f: int, y_c: int, n_c: int) -> "ScenarioPair":
        return cls(BinomialCount(y_f, n_f), BinomialCount(y_c, n_c))

    @property
    def is_counts(self) -> bool:
        return isinstance(self.factual, BinomialCount)

    def to_counts(self, event: EventDefinition | None = None) -> "ScenarioPair":
        if self.is_counts:
            return self
        if event is None:
            raise ValueError("an event definition is needed to count raw samples")
        return ScenarioPair(
            BinomialCount(int(event.exceeds(self.factual.values).sum()), len(self.factual)),
            BinomialCount(int(event.exceeds(self.counterfactual.values).sum()),
                          len(self.counterfactual)),
        )

    def swapped(self) -> "ScenarioPair":
        return ScenarioPair(self.counterfactual, self.factual)

    def counts(self) -> tuple[int, int, int, int]:
        if not self.is_counts:
            raise TypeError("pair holds raw samples; call to_counts(event) first")
        f, c = self.factual, self.counterfactual
        return f.events, f.trials, c.events, c.trials


def risk_ratio_estimate(pf_hat: float, pc_hat: float) -> ExtendedReal:
    """Plug-in ratio of the two estimated event probabilities."""
    for p in (pf_hat, pc_hat):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probabilities must lie in [0, 1], got {p!r}")
    if pc_hat == 0.0:
        return UNDEFINED if pf_hat == 0.0 else math.inf
    return pf_hat / pc_hat


def log_risk_ratio(pf_hat: float, pc_hat: float) -> ExtendedReal:
    rr = risk_ratio_estimate(pf_hat, pc_hat)
    if rr is UNDEFINED:
        return UNDEFINED
    if rr == 0.0:
        return -math.inf
    return math.log(rr)


def far_from_rr(rr: ExtendedReal) -> ExtendedReal:
    """Fraction of attributable risk, 1 - 1/RR."""
    if rr is UNDEFINED:
        return UNDEFINED
    if rr == 0.0:
        return -math.inf
    return 1.0 - 1.0 / rr


@dataclass(frozen=True)
class RatioInterval:
    estimate: ExtendedReal
    lower: float
    upper: float
    level: float
    side: Side
    method: str
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        side = Side.parse(self.side)
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "diagnostics", MappingProxyType(dict(self.diagnostics)))
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval endpoints must not be NaN")
        if not 0.0 <= self.lower <= self.upper:
            raise ValueError(f"need 0 <= lower <= upper, got ({self.lower}, {self.upper})")
        if side is Side.LOWER and self.upper != math.inf:
            raise ValueError("a lower one-sided interval has upper = +inf")
        if side is Side.UPPER and self.lower != 0.0:
            raise ValueError("an upper one-sided interval has lower = 0")

    def contains(self, rr: float) -> bool:
        return self.lower <= rr <= self.upper

    @property
    def far(self) -> tuple[ExtendedReal, float, float]:
        """(estimate, lower, upper) transformed to the FAR scale."""
        return far_from_rr(self.estimate), far_from_rr(self.lower), far_from_rr(self.upper)


def as_interval(estimate: ExtendedReal, lower: float, upper: float, level: float,
                side: Side | str, method: str,
                diagnostics: Mapping[str, float] | None = None) -> RatioInterval:
    """Build a RatioInterval, blanking the endpoint a one-sided request drops."""
    side = Side.parse(side)
    if side is Side.LOWER:
        upper = math.inf
    elif side is Side.UPPER:
        lower = 0.0
    return RatioInterval(estimate, lower, upper, level, side, method, diagnostics or {})


def counts_estimate(y_f: int, n_f: int, y_c: int, n_c: int) -> ExtendedReal:
    return risk_ratio_estimate(y_f / n_f, y_c / n_c)

