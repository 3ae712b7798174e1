"""Block-decomposed execution of an interlaced-masked attention stream.

Q, K and V are projected once over the whole concatenated sequence. Each
row modality then attends only to the gathered column blocks its pattern
allows, with one softmax spanning exactly those blocks. That reproduces
the dense ``-inf``-masked computation while touching only allowed blocks.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

from gsitlab import attn
from gsitlab.errors import AccountingError, DegenerateRowError, ShapeError
from gsitlab.maskgen import MODALITIES, BlockPattern, SegmentLayout, materialize
from gsitlab.numkit import Tensor2, concat_rows, matmul, take_rows

PHASES = (
    "qkv-projection",
    "map-generation",
    "scale",
    "softmax",
    "aggregation",
    "mlp",
    "final-projection",
)
STAGES = ("stage1", "stage2", "head")


class _Tally:
    __slots__ = ("_meter", "_key")

    def __init__(self, meter, key):
        self._meter = meter
        self._key = key

    def add(self, n: int):
        if n < 0:
            raise AccountingError("negative operation count")
        self._meter.counts[self._key] = self._meter.counts.get(self._key, 0) + int(n)


class FlopMeter:
    """Operation counter keyed by ``"<stage>/<phase>"``."""

    def __init__(self):
        self.counts: dict[str, int] = {}
        self.stage = "stage1"
        self.passes = 0

    def at(self, phase: str) -> _Tally:
        if phase not in PHASES:
            raise KeyError(f"unknown phase {phase!r}")
        return _Tally(self, f"{self.stage}/{phase}")

    @contextlib.contextmanager
    def in_stage(self, stage: str):
        if stage not in STAGES:
            raise KeyError(f"unknown stage {stage!r}")
        prev, self.stage = self.stage, stage
        try:
            yield self
        finally:
            self.stage = prev

    def begin_pass(self):
        if self.passes:
            raise AccountingError("meter already holds a forward pass; reset() it first")
        self.passes = 1

    def reset(self):
        self.counts.clear()
        self.stage = "stage1"
        self.passes = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def snapshot(self) -> dict[str, int]:
        return dict(sorted(self.counts.items()))


@dataclass
class MemMeter:
    """Attention-map element counts for one stream."""

    dense_total: int = 0
    block_sum: int = 0
    block_peak: int = 0

    def record_block(self, n: int):
        self.block_sum += n
        self.block_peak = max(self.block_peak, n)

    def as_dict(self) -> dict[str, int]:
        return {"dense_total": self.dense_total, "block_sum": self.block_sum, "block_peak": self.block_peak}


@dataclass(frozen=True)
class RowGroup:
    row: int
    columns: tuple[int, ...]

    def __post_init__(self):
        if not self.columns:
            raise DegenerateRowError(self.row, f"row group {MODALITIES[self.row]} allows no blocks")


def row_groups(pattern: BlockPattern) -> list[RowGroup]:
    return [RowGroup(i, tuple(pattern.row_group(i))) for i in range(3)]


def _indices(layout: SegmentLayout, mods) -> list[int]:
    out = []
    for m in mods:
        s = layout.span(m)
        out.extend(range(s.start, s.stop))
    return out


def exec_stream(weights: attn.EncoderWeights, v_m: Tensor2, layout: SegmentLayout,
                pattern: BlockPattern, meter: FlopMeter | None = None,
                mem: MemMeter | None = None, maps_out: dict | None = None) -> Tensor2:
    """Decomposed ``MLP o attention`` over ``v_m`` under ``pattern``.

    ``maps_out``, if given, receives ``row modality -> per-head maps`` over
    the gathered key blocks.
    """
    if v_m.rows != layout.total:
        raise ShapeError(f"sequence has {v_m.rows} rows, layout expects {layout.total}")
    groups = row_groups(pattern)
    tally = None if meter is None else meter.at("qkv-projection")
    q = matmul(v_m, weights.wq, meter=tally)
    k = matmul(v_m, weights.wk, meter=tally)
    v = matmul(v_m, weights.wv, meter=tally)
    if mem is not None:
        mem.dense_total += weights.heads * layout.total**2
    parts = []
    for g in groups:
        q_rows = take_rows(q, _indices(layout, [g.row]))
        cols = _indices(layout, g.columns)
        maps = attn.head_maps(q_rows, take_rows(k, cols), weights.heads, None, meter)
        parts.append(attn.mix_heads(maps, take_rows(v, cols), meter))
        if mem is not None:
            for j in g.columns:
                mem.record_block(weights.heads * layout.length(g.row) * layout.length(j))
        if maps_out is not None:
            maps_out[MODALITIES[g.row]] = maps
    return attn.mlp(weights, concat_rows(parts), meter)


def dense_stream(weights: attn.EncoderWeights, v_m: Tensor2, layout: SegmentLayout,
                 pattern: BlockPattern, meter: FlopMeter | None = None,
                 mem: MemMeter | None = None) -> Tensor2:
    """Reference path: full ``T_m x T_m`` maps with the materialised mask."""
    mask = None if pattern.is_all_allow else materialize(pattern, layout)
    if mem is not None:
        full = weights.heads * layout.total**2
        mem.dense_total += full
        mem.record_block(full)
    return attn.encode(weights, v_m, v_m, mask, meter)


def memory_report(layout: SegmentLayout, pattern: BlockPattern, heads: int) -> MemMeter:
    blocks = [heads * layout.length(i) * layout.length(j) for i, j in sorted(pattern.allow)]
    return MemMeter(heads * layout.total**2, sum(blocks), max(blocks))


def flop_report(meter: FlopMeter) -> dict:
    """Snapshot of a meter that observed exactly one full forward pass."""
    if meter.passes != 1:
        raise AccountingError(f"meter observed {meter.passes} forward passes, expected 1")
    by_phase = {p: 0 for p in PHASES}
    for key, n in meter.counts.items():
        by_phase[key.split("/", 1)[1]] += n
    return {"counts": meter.snapshot(), "phases": by_phase, "total": meter.total}
