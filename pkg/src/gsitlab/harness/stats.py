"""Moment statistics of model weights, per encoder and pooled."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gsitlab.attn import EncoderWeights
from gsitlab.errors import DegenerateDistributionError
from gsitlab.models import named_arrays
from gsitlab.numkit import MomentStats, moments


@dataclass
class WeightReport:
    stats: dict = field(default_factory=dict)  # name -> MomentStats | None
    degenerate: dict = field(default_factory=dict)  # name -> bool

    def as_dict(self) -> dict:
        out = {}
        for name, s in self.stats.items():
            out[name] = None if s is None else {
                "mean": s.mean, "variance": s.variance, "skewness": s.skewness, "kurtosis": s.kurtosis,
            }
        return {"stats": out, "degenerate": dict(self.degenerate)}


def _groups(weights) -> dict:
    if isinstance(weights, EncoderWeights):
        return {"encoder": [t for _, t in weights.tensors()]}
    groups: dict = {}
    seen = set()
    for name, t in named_arrays(weights):
        if name == "f" or id(t) in seen:
            continue
        seen.add(id(t))
        groups.setdefault(name.rsplit(".", 1)[0], []).append(t)
    return groups


def weight_report(weights) -> WeightReport:
    """Moments of each encoder's flattened parameters and of all of them.

    The final projection is left out. Aliased tensors count once, so tied
    encoders show up only under their first name. Constant arrays get
    ``None`` stats and a degenerate flag instead of raising.
    """
    report = WeightReport()
    groups = _groups(weights)
    groups["all"] = [t for ts in groups.values() for t in ts]
    for name, tensors in groups.items():
        flat = np.concatenate([t.data.reshape(-1) for t in tensors])
        try:
            report.stats[name] = moments(flat)
            report.degenerate[name] = False
        except DegenerateDistributionError:
            report.stats[name] = None
            report.degenerate[name] = True
    return report


__all__ = ["MomentStats", "WeightReport", "weight_report"]
