"""Event-probability estimators for a single scenario."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import BinomialCount, DegenerateSampleError, EventDefinition, RawSample

_TINY = np.nextafter(0.0, 1.0)


class Source(str, enum.Enum):
    NONPARAMETRIC = "nonparametric"
    PARAMETRIC_NORMAL = "parametric_normal"
    EVA = "eva"


@dataclass(frozen=True)
class ProbabilityEstimate:
    value: float
    n_effective: int
    source: Source
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"probability out of range: {self.value!r}")
        object.__setattr__(self, "source", Source(self.source))


def estimate_nonparametric(sample: RawSample | BinomialCount,
                           event: EventDefinition | None = None) -> ProbabilityEstimate:
    """Proportion of ensemble members in which the event occurs."""
    if isinstance(sample, BinomialCount):
        return ProbabilityEstimate(sample.events / sample.trials, sample.trials,
                                   Source.NONPARAMETRIC)
    if event is None:
        raise ValueError("raw samples need an event definition")
    hits = int(event.exceeds(sample.values).sum())
    return ProbabilityEstimate(hits / len(sample), len(sample), Source.NONPARAMETRIC)


def normal_tail(values: np.ndarray, cutoff: float) -> float:
    """Upper-tail mass beyond ``cutoff`` of a normal fitted to ``values``.

    Uses the unbiased variance. Raises DegenerateSampleError when the sample
    has no spread.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DegenerateSampleError("parametric fit needs at least two values")
    sd = values.std(ddof=1)
    if not sd > 0.0:
        raise DegenerateSampleError("sample variance is zero")
    # ndtr(-z) is erfc-based, so far-tail masses keep full relative precision
    p = float(ndtr(-(cutoff - values.mean()) / sd))
    return min(max(p, _TINY), 1.0 - np.finfo(float).epsneg)


def estimate_parametric_normal(sample: RawSample,
                               event: EventDefinition) -> ProbabilityEstimate:
    values, cutoff = event.oriented(sample.values)
    return ProbabilityEstimate(normal_tail(values, cutoff), len(sample),
                               Source.PARAMETRIC_NORMAL)
