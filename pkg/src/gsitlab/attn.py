"""Multi-head attention split into map generation and aggregation.

``generate`` builds the per-head adjacency (attention) maps, ``aggregate``
mixes value projections with them, and ``encode`` is ``MLP o aggregate``.
There are no biases, residuals, normalisation layers or output projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from gsitlab.errors import ShapeError
from gsitlab.numkit import (
    Rng,
    Tensor2,
    bmm,
    bmm_nt,
    concat_cols,
    matmul,
    relu,
    scale,
    slice_cols,
    softmax_rows,
    transpose,
)

WEIGHT_NAMES = ("wq", "wk", "wv", "w1", "w2")


@dataclass(frozen=True)
class EncoderWeights:
    wq: Tensor2
    wk: Tensor2
    wv: Tensor2
    w1: Tensor2
    w2: Tensor2
    heads: int

    def __post_init__(self):
        d = self.wq.rows
        for name in ("wq", "wk", "wv"):
            if getattr(self, name).shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {getattr(self, name).shape}")
        p = self.w1.cols
        if self.w1.shape != (d, p) or self.w2.shape != (p, d):
            raise ShapeError(f"MLP weights {self.w1.shape}, {self.w2.shape} do not fit width {d}")
        if self.heads < 1 or d % self.heads:
            raise ShapeError(f"width {d} is not divisible by {self.heads} heads")
        if p < d:
            raise ShapeError(f"MLP hidden width {p} is below model width {d}")

    @property
    def d(self) -> int:
        return self.wq.rows

    @property
    def hidden(self) -> int:
        return self.w1.cols

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    def tensors(self) -> list[tuple[str, Tensor2]]:
        return [(n, getattr(self, n)) for n in WEIGHT_NAMES]

    def replace(self, **arrays) -> "EncoderWeights":
        fields = {n: arrays.get(n, getattr(self, n)) for n in WEIGHT_NAMES}
        return EncoderWeights(heads=self.heads, **fields)


def init_encoder(rng: Rng, d: int, hidden: int, heads: int, std: float | None = None) -> EncoderWeights:
    """Gaussian init; default std is ``1/sqrt(fan_in)`` per matrix."""

    def draw(rows, cols):
        s = std if std is not None else 1.0 / math.sqrt(rows)
        return Tensor2(rng.normal_matrix(rows, cols, std=s))

    return EncoderWeights(
        wq=draw(d, d), wk=draw(d, d), wv=draw(d, d),
        w1=draw(d, hidden), w2=draw(hidden, d), heads=heads,
    )


@dataclass
class AttentionResult:
    maps: list[Tensor2]
    output: Tensor2


def _at(meter, phase):
    return None if meter is None else meter.at(phase)


def _check_inputs(weights: EncoderWeights, queries: Tensor2, keys: Tensor2, mask, groups=1):
    if queries.cols != weights.d or keys.cols != weights.d:
        raise ShapeError(
            f"inputs have widths {queries.cols}/{keys.cols}, encoder expects {weights.d}"
        )
    if mask is not None and mask.shape != (queries.rows, keys.rows // groups):
        raise ShapeError(f"mask {mask.shape} does not match {queries.rows}x{keys.rows // groups}")


def head_maps(q: Tensor2, k: Tensor2, heads: int, mask: Tensor2 | None = None,
              meter=None, groups: int = 1) -> list[Tensor2]:
    """Per-head softmax((Q_l K_l^T) / sqrt(d/L) + mask) from projected Q, K.

    With ``groups > 1`` the rows of ``q`` and ``k`` hold that many
    independent sequences stacked in order; each map row then spans only
    its own group's keys (maps are ``(G*T_q) x T_k``).
    """
    h = q.cols // heads
    c = 1.0 / math.sqrt(h)
    maps = []
    for l in range(heads):
        ql = slice_cols(q, l * h, (l + 1) * h) if heads > 1 else q
        kl = slice_cols(k, l * h, (l + 1) * h) if heads > 1 else k
        if groups == 1:
            logits = matmul(ql, transpose(kl), meter=_at(meter, "map-generation"))
        else:
            logits = bmm_nt(ql, kl, groups, meter=_at(meter, "map-generation"))
        logits = scale(logits, c, meter=_at(meter, "scale"))
        maps.append(softmax_rows(logits, mask, meter=_at(meter, "softmax")))
    return maps


def mix_heads(maps: list[Tensor2], v: Tensor2, meter=None, groups: int = 1) -> Tensor2:
    """Concatenate ``G_l (V W_v)_l`` over heads."""
    heads = len(maps)
    h = v.cols // heads
    outs = []
    for l, g in enumerate(maps):
        vl = slice_cols(v, l * h, (l + 1) * h) if heads > 1 else v
        if groups == 1:
            outs.append(matmul(g, vl, meter=_at(meter, "aggregation")))
        else:
            outs.append(bmm(g, vl, groups, meter=_at(meter, "aggregation")))
    return outs[0] if heads == 1 else concat_cols(outs)


def mlp(weights: EncoderWeights, x: Tensor2, meter=None) -> Tensor2:
    tally = _at(meter, "mlp")
    return matmul(relu(matmul(x, weights.w1, meter=tally)), weights.w2, meter=tally)


def generate(weights: EncoderWeights, queries: Tensor2, keys: Tensor2,
             mask: Tensor2 | None = None, meter=None, groups: int = 1) -> list[Tensor2]:
    _check_inputs(weights, queries, keys, mask, groups)
    tally = _at(meter, "qkv-projection")
    q = matmul(queries, weights.wq, meter=tally)
    k = matmul(keys, weights.wk, meter=tally)
    return head_maps(q, k, weights.heads, mask, meter, groups)


def aggregate(maps: list[Tensor2], values_input: Tensor2, weights: EncoderWeights,
              meter=None, groups: int = 1) -> Tensor2:
    if len(maps) != weights.heads:
        raise ShapeError(f"{len(maps)} maps for {weights.heads} heads")
    if values_input.cols != weights.d or any(g.cols * groups != values_input.rows for g in maps):
        raise ShapeError("maps and value sequence disagree on the key count or width")
    v = matmul(values_input, weights.wv, meter=_at(meter, "qkv-projection"))
    return mix_heads(maps, v, meter, groups)


def attend(weights: EncoderWeights, queries: Tensor2, keys: Tensor2,
           mask: Tensor2 | None = None, meter=None, groups: int = 1) -> AttentionResult:
    maps = generate(weights, queries, keys, mask, meter, groups)
    out = mlp(weights, aggregate(maps, keys, weights, meter, groups), meter)
    return AttentionResult(maps, out)


def encode(weights: EncoderWeights, queries: Tensor2, keys: Tensor2,
           mask: Tensor2 | None = None, meter=None, groups: int = 1) -> Tensor2:
    """``relu(aggregate . W_1) . W_2``, shape ``T_q x d``."""
    return attend(weights, queries, keys, mask, meter, groups).output
