from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gsitlab.errors import ContractError, DegenerateDistributionError

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class MomentStats:
    mean: float
    variance: float
    skewness: float
    kurtosis: float  # excess


def moments(values) -> MomentStats:
    """Population mean, variance, skewness and excess kurtosis."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ContractError("moments need at least two values")
    mean = float(x.mean())
    c = x - mean
    m2 = float(np.mean(c**2))
    if m2 <= VARIANCE_FLOOR:
        raise DegenerateDistributionError(f"variance {m2:.3g} too small for higher moments")
    m3 = float(np.mean(c**3))
    m4 = float(np.mean(c**4))
    return MomentStats(mean, m2, m3 / m2**1.5, m4 / m2**2 - 3.0)
