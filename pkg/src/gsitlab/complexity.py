"""Closed-form operation and memory counts, and parameter counting.

Counts use the same conventions as the runtime meters: a matmul
``m x n x k`` costs ``m*n*k`` multiplications, scaling costs one per map
element, softmax two per unmasked map element, and the ReLU is free.
The MLP hidden width is ``p`` at stage 1 and ``2p`` at stage 2 (width 2d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gsitlab.blockexec import PHASES, FlopMeter, MemMeter, memory_report
from gsitlab.errors import ReconciliationError
from gsitlab.maskgen import BlockPattern, SegmentLayout, StructureName, pattern_of, stream_patterns
from gsitlab.models.weights import BACKWARD_PARTNER, FORWARD_PARTNER, ModelConfig

KINDS = ("mult", "gsit", "naive")
TERMS = ("qkv1", "attn1-gen", "attn1-agg", "mlp1", "qkv2", "attn2-gen", "attn2-agg", "mlp2", "final")
_TERM_OF = {
    "qkv-projection": "qkv",
    "map-generation": "attn{}-gen",
    "scale": "attn{}-gen",
    "softmax": "attn{}-gen",
    "aggregation": "attn{}-agg",
    "mlp": "mlp{}",
}


@dataclass(frozen=True)
class ParamCount:
    per_encoder: dict
    head: int
    total: int  # fusion encoders only, head excluded

    @property
    def with_head(self) -> int:
        return self.total + self.head


def params(weights) -> ParamCount:
    """Distinct stored weight entries; aliased encoders count once."""
    from gsitlab.models.checkpoint import named_arrays

    seen = set()
    per = {}
    head = 0
    for name, t in named_arrays(weights):
        if id(t) in seen:
            continue
        seen.add(id(t))
        n = t.rows * t.cols
        if name == "f":
            head += n
            continue
        enc = name.rsplit(".", 1)[0]
        per[enc] = per.get(enc, 0) + n
    return ParamCount(per, head, sum(per.values()))


@dataclass
class ComplexityBreakdown:
    kind: str
    decomposed: bool
    counts: dict = field(default_factory=dict)  # "<stage>/<phase>" -> ops

    def add(self, stage: str, phase: str, n: int):
        key = f"{stage}/{phase}"
        self.counts[key] = self.counts.get(key, 0) + n

    @property
    def terms(self) -> dict:
        """Rolled up into the qkv / attention / MLP steps per stage."""
        out = {t: 0 for t in TERMS}
        for key, n in self.counts.items():
            stage, phase = key.split("/", 1)
            if stage == "head":
                out["final"] += n
                continue
            s = stage[-1]
            term = _TERM_OF[phase]
            out[term + s if term == "qkv" else term.format(s)] += n
        return out

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _attention(b: ComplexityBreakdown, stage, t_q, t_k, d, heads, finite=None):
    """One attention map of T_q x T_k at width d; ``finite`` unmasked entries."""
    b.add(stage, "map-generation", t_q * t_k * d)
    b.add(stage, "scale", heads * t_q * t_k)
    b.add(stage, "softmax", 2 * heads * (t_q * t_k if finite is None else finite))
    b.add(stage, "aggregation", t_q * t_k * d)


def _blocks(layout: SegmentLayout, pattern: BlockPattern) -> int:
    return sum(layout.length(i) * layout.length(j) for i, j in pattern.allow)


def _stream(b, stage, layout, pattern, d, hidden, heads, decomposed):
    T = layout.total
    b.add(stage, "qkv-projection", 3 * T * d * d)
    if decomposed or pattern.is_all_allow:
        for i in range(3):
            for j in pattern.row_group(i):
                _attention(b, stage, layout.length(i), layout.length(j), d, heads)
    else:
        _attention(b, stage, T, T, d, heads, finite=_blocks(layout, pattern))
    b.add(stage, "mlp", 2 * T * d * hidden)


def flops_closed_form(cfg: ModelConfig, kind: str, decomposed: bool = False) -> ComplexityBreakdown:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    lay, d, p, L = cfg.layout, cfg.d, cfg.p, cfg.heads
    b = ComplexityBreakdown(kind, decomposed)
    if kind == "naive":
        from gsitlab.maskgen import ALL_ALLOW

        _stream(b, "stage1", lay, ALL_ALLOW, d, p, L, decomposed)
        b.add("head", "final-projection", 3 * d * cfg.out_dim)
        return b
    if kind == "mult":
        for i in "tva":
            for j in (FORWARD_PARTNER[i], BACKWARD_PARTNER[i]):
                ti, tj = lay.length(i), lay.length(j)
                b.add("stage1", "qkv-projection", (ti + 2 * tj) * d * d)
                _attention(b, "stage1", ti, tj, d, L)
                b.add("stage1", "mlp", 2 * ti * d * p)
        for i in "tva":
            ti = lay.length(i)
            b.add("stage2", "qkv-projection", 3 * ti * (2 * d) ** 2)
            _attention(b, "stage2", ti, ti, 2 * d, L)
            b.add("stage2", "mlp", 2 * ti * (2 * d) * (2 * p))
    else:
        for pat in stream_patterns(cfg.structure):
            _stream(b, "stage1", lay, pat, d, p, L, decomposed)
        _stream(b, "stage2", lay, pattern_of(StructureName.IEM), 2 * d, 2 * p, L, decomposed)
    b.add("head", "final-projection", 6 * d * cfg.out_dim)
    return b


@dataclass
class ReconcileReport:
    kind: str
    phases: dict  # key -> (measured, predicted)

    @property
    def ok(self) -> bool:
        return all(m == p for m, p in self.phases.values())

    def mismatches(self) -> dict:
        return {k: v for k, v in self.phases.items() if v[0] != v[1]}


def reconcile(measured, predicted: ComplexityBreakdown, *, strict: bool = True) -> ReconcileReport:
    """Exact per-phase comparison; raises on mismatch unless ``strict=False``."""
    counts = measured.snapshot() if isinstance(measured, FlopMeter) else dict(measured)
    keys = sorted(set(counts) | set(predicted.counts))
    report = ReconcileReport(predicted.kind, {k: (counts.get(k, 0), predicted.counts.get(k, 0)) for k in keys})
    if strict and not report.ok:
        raise ReconciliationError(report.mismatches())
    return report


# ------------------------------------------------------------------ memory


def gsit_memory(layout: SegmentLayout, heads: int, structure=StructureName.ORIGINAL) -> dict:
    fwd, bwd = stream_patterns(structure)
    iem = pattern_of(StructureName.IEM)
    return {
        "forward": memory_report(layout, fwd, heads),
        "backward": memory_report(layout, bwd, heads),
        "intra": memory_report(layout, iem, heads),
    }


def mult_memory(layout: SegmentLayout, heads: int) -> dict:
    """Map sizes of MulT's separately computed maps (pairs ``"tv"`` ... and ``"tt"`` ...)."""
    out = {}
    for i in "tva":
        for j in (FORWARD_PARTNER[i], BACKWARD_PARTNER[i]):
            out[i + j] = heads * layout.length(i) * layout.length(j)
    for i in "tva":
        out[i + i] = heads * layout.length(i) ** 2
    return out


# ------------------------------------------------------ coarse formulas


def folded_terms(layout: SegmentLayout, d: int, p: int) -> dict:
    """Coarse per-step cost expressions.

    These fold scaling and softmax into ``2`` per element and count the
    stage-1 MLP once; they are reported for comparison, while
    :func:`flops_closed_form` holds the exact counts.
    """
    t, v, a = layout.lengths
    T = t + v + a
    cross = t * v + t * a + v * a
    sq = t * t + v * v + a * a
    return {
        "mult": {
            "qkv1": 6 * T * d * d,
            "attn1": cross * (4 * d + 4),
            "mlp1": 2 * T * d * p,
            "qkv2": 12 * T * d * d,
            "attn2": sq * (6 * d + 4),
            "mlp2": 8 * T * d * p,
        },
        "gsit": {
            "qkv1": 6 * T * d * d,
            "attn1": cross * (4 * d + 4),
            "attn1_dense": T * T * (2 * d + 6) + cross * 2 * d,
            "mlp1": 2 * T * d * p,
            "qkv2": 12 * T * d * d,
            "attn2": sq * (4 * d + 2),
            "attn2_dense": T * T * (2 * d + 3) + sq * 2 * d,
            "mlp2": 8 * T * d * p,
        },
    }
