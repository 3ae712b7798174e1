"""Forward passes for the naive graph model, the MulT forest and GsiT.

Every pass accepts a batch of samples stacked along rows (sample-major).
Attention maps are then computed per sample with grouped products, so a
batch of one is exactly the unbatched computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gsitlab import attn, blockexec
from gsitlab.errors import ShapeError
from gsitlab.maskgen import (
    MODALITIES,
    BlockPattern,
    SegmentLayout,
    StructureName,
    materialize,
    pattern_of,
    stream_patterns,
)
from gsitlab.models.weights import (
    BACKWARD_PARTNER,
    FORWARD_PARTNER,
    GsiTWeights,
    MulTWeights,
    NaiveWeights,
)
from gsitlab.numkit import Tensor2, concat_cols, concat_rows, matmul, take_rows


@dataclass
class ModelOutput:
    prediction: Tensor2  # batch x out_dim
    states: dict  # modality -> batch x width final state
    stage1: object = None
    maps: dict = field(default_factory=dict)


def _tile(mask: Tensor2 | None, batch: int) -> Tensor2 | None:
    if mask is None or batch == 1:
        return mask
    return Tensor2(np.tile(mask.data, (batch, 1)))


def _last_rows(layout: SegmentLayout, batch: int) -> dict:
    n = layout.total
    return {m: [b * n + r for b in range(batch)] for m, r in zip(MODALITIES, layout.last_rows())}


def _head(states: list[Tensor2], f: Tensor2, meter) -> Tensor2:
    x = concat_cols(states)
    if x.cols != f.rows:
        raise ShapeError(f"final projection expects width {f.rows}, got {x.cols}")
    if meter is None:
        return matmul(x, f)
    with meter.in_stage("head"):
        return matmul(x, f, meter=meter.at("final-projection"))


def _start(meter):
    if meter is not None:
        meter.begin_pass()
        meter.stage = "stage1"


def _rows_of(v_m: Tensor2, layout: SegmentLayout, batch: int):
    if v_m.rows != batch * layout.total:
        raise ShapeError(f"sequence has {v_m.rows} rows, expected {batch} x {layout.total}")


def naive_forward(w: NaiveWeights, v_m: Tensor2, layout: SegmentLayout, *,
                  batch: int = 1, meter=None) -> ModelOutput:
    """One unmasked self-attention encoder over the whole sequence."""
    _rows_of(v_m, layout, batch)
    _start(meter)
    res = attn.attend(w.encoder, v_m, v_m, None, meter, batch)
    rows = _last_rows(layout, batch)
    states = {m: take_rows(res.output, rows[m]) for m in MODALITIES}
    pred = _head([states[m] for m in MODALITIES], w.f, meter)
    return ModelOutput(pred, states, res.output, {"m": res.maps})


def split_inputs(v_m: Tensor2, layout: SegmentLayout, batch: int = 1) -> tuple[Tensor2, Tensor2, Tensor2]:
    """Per-modality stacks from a concatenated, sample-major sequence."""
    n = layout.total
    parts = []
    for m in MODALITIES:
        s = layout.span(m)
        parts.append(take_rows(v_m, [b * n + r for b in range(batch) for r in range(s.start, s.stop)]))
    return tuple(parts)


def join_inputs(inputs, layout: SegmentLayout | None = None, batch: int = 1) -> Tensor2:
    """Inverse of :func:`split_inputs`."""
    if batch == 1:
        return concat_rows(list(inputs))
    lens = layout.lengths
    rows = []
    for b in range(batch):
        for x, n in zip(inputs, lens):
            rows.append(take_rows(x, list(range(b * n, (b + 1) * n))))
    return concat_rows(rows)


def mult_forward(w: MulTWeights, inputs, *, batch: int = 1, meter=None,
                 keep_maps: bool = False) -> ModelOutput:
    """Six cross-modal encoders, then one self encoder per modality."""
    seqs = dict(zip(MODALITIES, inputs))
    if len(seqs) != 3:
        raise ShapeError("mult_forward needs three modality sequences")
    lens = {}
    for m, x in seqs.items():
        if x.rows % batch:
            raise ShapeError(f"{m} rows {x.rows} not divisible by batch {batch}")
        lens[m] = x.rows // batch
    layout = SegmentLayout(tuple(lens[m] for m in MODALITIES))
    _start(meter)

    maps = {}
    fused = {}
    for i in MODALITIES:
        outs = []
        for j in (FORWARD_PARTNER[i], BACKWARD_PARTNER[i]):
            res = attn.attend(w.cross[(i, j)], seqs[i], seqs[j], None, meter, batch)
            outs.append(res.output)
            if keep_maps:
                maps[i + j] = res.maps
        fused[i] = concat_cols(outs)

    states = {}
    if meter is not None:
        meter.stage = "stage2"
    for i in MODALITIES:
        n = lens[i]
        res = attn.attend(w.self_[i], fused[i], fused[i], None, meter, batch)
        if keep_maps:
            maps[i + i] = res.maps
        states[i] = take_rows(res.output, [b * n + n - 1 for b in range(batch)])
    pred = _head([states[m] for m in MODALITIES], w.f, meter)
    return ModelOutput(pred, states, fused, maps)


def _stream(weights, v_m, layout, pattern: BlockPattern, batch, decomposed, meter, mem, maps, key):
    if decomposed:
        if batch != 1:
            raise ShapeError("the decomposed engine runs one sample at a time")
        per_row = {}
        out = blockexec.exec_stream(weights, v_m, layout, pattern, meter, mem, per_row)
        maps[key] = per_row
        return out
    inner = None if pattern.is_all_allow else materialize(pattern, layout)
    mask = _tile(inner, batch)
    if mem is not None:
        full = weights.heads * layout.total**2
        mem.dense_total += full
        mem.record_block(full)
    res = attn.attend(weights, v_m, v_m, mask, meter, batch)
    maps[key] = res.maps
    return res.output


def gsit_forward(w: GsiTWeights, v_m: Tensor2, layout: SegmentLayout,
                 structure: StructureName | str = StructureName.ORIGINAL, *,
                 batch: int = 1, decomposed: bool = False, meter=None,
                 memory: dict | None = None) -> ModelOutput:
    """All-modal-in-one fusion: two masked streams, then the IEM stage.

    ``memory`` (optional) is filled with one :class:`~gsitlab.blockexec.MemMeter`
    per stream: ``forward``, ``backward``, ``intra``.
    """
    _rows_of(v_m, layout, batch)
    fwd_pat, bwd_pat = stream_patterns(structure)
    iem = pattern_of(StructureName.IEM)
    _start(meter)
    mems = {k: None for k in ("forward", "backward", "intra")}
    if memory is not None:
        for k in mems:
            mems[k] = memory.setdefault(k, blockexec.MemMeter())
    maps: dict = {}
    a_fwd = _stream(w.forward, v_m, layout, fwd_pat, batch, decomposed, meter, mems["forward"], maps, "forward")
    a_bwd = _stream(w.backward, v_m, layout, bwd_pat, batch, decomposed, meter, mems["backward"], maps, "backward")
    fused = concat_cols([a_fwd, a_bwd])
    if meter is not None:
        meter.stage = "stage2"
    h = _stream(w.intra, fused, layout, iem, batch, decomposed, meter, mems["intra"], maps, "intra")
    rows = _last_rows(layout, batch)
    states = {m: take_rows(h, rows[m]) for m in MODALITIES}
    pred = _head([states[m] for m in MODALITIES], w.f, meter)
    return ModelOutput(pred, states, fused, maps)
