"""Information-disorder demonstrator.

The forward fusion mask lets the text rows attend only to vision. Opening
the (t, a) block as well puts audio columns into the same softmax row, so
the text-to-vision weights shrink by each row's audio share. Restricting
the widened rows back to the vision columns and renormalising recovers
the original weights exactly; the mask change alone causes the drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gsitlab import attn
from gsitlab.maskgen import MODALITIES, BlockPattern, SegmentLayout, StructureName, materialize, pattern_of
from gsitlab.numkit import Rng, Tensor2

IDENTITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DisorderReport:
    seed: int
    layout: SegmentLayout
    deviation: dict  # row modality -> max |G - G'| over its originally allowed block
    identity_residual: float
    verdict: str

    @property
    def shared_deviation(self) -> float:
        """Deviation on the text-rows x vision-columns block."""
        return self.deviation["t"]

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "layout": str(self.layout),
            "deviation": dict(self.deviation),
            "identity_residual": self.identity_residual,
            "verdict": self.verdict,
        }


def widened_pattern(base: BlockPattern) -> BlockPattern:
    """``base`` plus the (t, a) block."""
    return BlockPattern(base.allow | {(0, 2)}, f"{base.name}+ta")


def disorder_demo(seed: int, layout: SegmentLayout, d: int, heads: int = 1,
                  suppress_ta: bool = False) -> DisorderReport:
    """Compare forward-mask maps with the (t, a)-widened variant.

    ``suppress_ta`` forces the (t, a) logits back to ``-inf`` inside the
    widened mask, so both masks coincide and the deviation must vanish.
    """
    rng = Rng.derive(seed, 0xD150)
    v_m = Tensor2(rng.normal_matrix(layout.total, d))
    weights = attn.init_encoder(rng, d, d, heads)
    base = pattern_of(StructureName.ORIGINAL)[0]
    wide = widened_pattern(base)

    g = [m.data for m in attn.generate(weights, v_m, v_m, materialize(base, layout))]
    wide_mask = materialize(wide, layout).data.copy()
    if suppress_ta:
        wide_mask[layout.span("t"), layout.span("a")] = -np.inf
    g2 = [m.data for m in attn.generate(weights, v_m, v_m, Tensor2(wide_mask))]

    deviation = {}
    for i, m in enumerate(MODALITIES):
        rows = layout.span(m)
        worst = 0.0
        for j in base.row_group(i):
            cols = layout.span(MODALITIES[j])
            for a, b in zip(g, g2):
                worst = max(worst, float(np.max(np.abs(a[rows, cols] - b[rows, cols]))))
        deviation[m] = worst

    t_rows, v_cols = layout.span("t"), layout.span("v")
    residual = 0.0
    for a, b in zip(g, g2):
        sub = b[t_rows, v_cols]
        restored = sub / sub.sum(axis=1, keepdims=True)
        residual = max(residual, float(np.max(np.abs(restored - a[t_rows, v_cols]))))

    if residual > IDENTITY_TOLERANCE:
        verdict = "identity-violated"
    elif deviation["t"] > 0.0:
        verdict = "disorder"
    else:
        verdict = "no-disorder"
    return DisorderReport(seed, layout, deviation, residual, verdict)
