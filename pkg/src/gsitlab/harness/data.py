"""Synthetic trimodal regression data.

Each sample draws a target ``y ~ U(-1, 1)``. Every modality is a
standard-normal sequence except one modality-specific channel (text 0,
vision 1, audio 2), which carries ``y`` plus two noise terms:

* a *cross-modal* term ``spread * (g_k - mean_k g)``; its three modality
  components sum to zero at each aligned timestep (aligned from the end),
  so it cancels only when the modalities are combined;
* an independent term ``noise * eta``.

A single modality's final step therefore sees ``y`` through noise of
variance ``2/3 spread^2 + noise^2``, while the three-modality average sees
only ``noise^2 / 3``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gsitlab.maskgen import MODALITIES, SegmentLayout
from gsitlab.numkit import Rng, Tensor2

SIGNAL_CHANNEL = {"t": 0, "v": 1, "a": 2}


@dataclass(frozen=True)
class SyntheticSample:
    vt: Tensor2
    vv: Tensor2
    va: Tensor2
    target: float

    @property
    def inputs(self) -> tuple[Tensor2, Tensor2, Tensor2]:
        return (self.vt, self.vv, self.va)


def gen_sample(seed: int, index: int, layout: SegmentLayout, d: int, *,
               noise: float = 0.3, spread: float = 0.6, target: float | None = None) -> SyntheticSample:
    if d < 3:
        raise ValueError("need at least 3 feature channels to carry the signal")
    rng = Rng.derive(seed, index)
    y = float(rng.uniform(1)[0] * 2.0 - 1.0)
    if target is not None:
        y = float(target)
    longest = max(layout.lengths)
    g = rng.normal_matrix(longest, 3)
    g -= g.mean(axis=1, keepdims=True)
    seqs = []
    for k, m in enumerate(MODALITIES):
        n = layout.length(m)
        x = rng.normal_matrix(n, d)
        eta = rng.normal(n)
        x[:, SIGNAL_CHANNEL[m]] = y + spread * g[longest - n:, k] + noise * eta
        seqs.append(Tensor2(x))
    return SyntheticSample(*seqs, y)


def gen_dataset(seed: int, n: int, layout: SegmentLayout, d: int, *,
                noise: float = 0.3, spread: float = 0.6) -> list[SyntheticSample]:
    if n < 1:
        raise ValueError("dataset size must be at least 1")
    return [gen_sample(seed, i, layout, d, noise=noise, spread=spread) for i in range(n)]


def stack(samples: list[SyntheticSample]):
    """``(V_m stack, (V_t, V_v, V_a) stacks, targets)`` in sample-major order."""
    v_m = Tensor2(np.concatenate([np.concatenate([s.vt.data, s.vv.data, s.va.data]) for s in samples]))
    per = tuple(Tensor2(np.concatenate([s.inputs[k].data for s in samples])) for k in range(3))
    y = Tensor2(np.array([[s.target] for s in samples]))
    return v_m, per, y
