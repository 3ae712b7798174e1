"""Self-verification suites behind ``gsitlab verify``.

Each suite returns ``{"pass": bool, "max_abs_diff": float, "details": {...}}``
and is fully determined by its arguments.
"""

from __future__ import annotations

import math

import numpy as np

from gsitlab import attn, blockexec, complexity
from gsitlab.graphoracle import VertexSet, build_bipartite, build_complete, gat_aggregate
from gsitlab.harness.disorder import IDENTITY_TOLERANCE, disorder_demo
from gsitlab.harness.gradcheck import fd_check
from gsitlab.maskgen import (
    SegmentLayout,
    StructureName,
    materialize,
    pattern_of,
    validate,
)
from gsitlab.models import (
    ModelConfig,
    gsit_forward,
    init_gsit,
    init_mult,
    mult_forward,
    split_inputs,
    tie_weights,
)
from gsitlab.numkit import (
    Rng,
    Tensor2,
    add,
    bmm,
    bmm_nt,
    concat_cols,
    concat_rows,
    matmul,
    mse,
    relu,
    scale,
    slice_cols,
    softmax_rows,
    sum_all,
    take_rows,
    transpose,
)

GRAPH_TOL = 1e-12
EQUIV_TOL = 1e-10
NEGATIVE_MIN = 1e-3
DECOMP_TOL = 1e-12
GRAD_TOL = 1e-6
DISORDER_MIN = 1e-3

# Golden Allow sets; cell (i, j) means row i attends to column j.
GOLDEN_ALLOW = {
    "original": ({"tv", "va", "at"}, {"ta", "vt", "av"}),
    "s1": ({"ta", "va", "at"}, {"tv", "vt", "at"}),
    "s2": ({"tv", "vt", "av"}, {"ta", "va", "at"}),
    "s3": ({"tv", "va", "av"}, {"ta", "vt", "at"}),
    "self_only": {"tv", "ta", "vt", "va", "at", "av"},
    "iem": {"tt", "vv", "aa"},
}


def _randint(rng: Rng, lo: int, hi: int) -> int:
    """Uniform integer in ``[lo, hi]``."""
    return lo + int(rng.next_u64() % (hi - lo + 1))


def _pick(rng: Rng, options):
    return options[int(rng.next_u64() % len(options))]


def _result(ok: bool, diff: float, **details) -> dict:
    return {"pass": bool(ok), "max_abs_diff": float(diff), "details": details}


def _maxdiff(a: Tensor2, b: Tensor2) -> float:
    return float(np.max(np.abs(a.data - b.data)))


# ------------------------------------------------------------------ graph


def graph_suite(trials: int = 100, seed: int = 1) -> dict:
    """Attention versus loop-based GAT on bipartite and complete graphs."""
    worst = 0.0
    kinds = {"bipartite": 0, "complete": 0}
    for trial in range(trials):
        rng = Rng.derive(seed, 0x6A, trial)
        d = _pick(rng, (4, 8))
        heads = _pick(rng, (1, 2))
        w = attn.init_encoder(rng, d, d, heads)
        n_q = _randint(rng, 1, 8)
        tgt = Tensor2(rng.normal_matrix(n_q, d))
        if trial % 2 == 0:
            src = Tensor2(rng.normal_matrix(_randint(rng, 1, 8), d))
            graph = build_bipartite(VertexSet(tgt, "dominant"), VertexSet(src, "auxiliary"))
            kinds["bipartite"] += 1
        else:
            src = tgt
            graph = build_complete(VertexSet(tgt))
            kinds["complete"] += 1
        ref = gat_aggregate(graph, w)
        got = attn.aggregate(attn.generate(w, tgt, src), src, w)
        worst = max(worst, _maxdiff(ref, got))
    return _result(worst <= GRAPH_TOL, worst, trials=trials, tolerance=GRAPH_TOL, **kinds)


# ------------------------------------------------------------------ equiv


def random_model_config(rng: Rng, max_len: int = 12) -> ModelConfig:
    layout = SegmentLayout(tuple(_randint(rng, 1, max_len) for _ in range(3)))
    d = _pick(rng, (4, 8))
    heads = _pick(rng, (1, 2))
    p = d * _pick(rng, (1, 2))
    return ModelConfig(layout, d, p, heads)


def output_gap(a, b) -> float:
    """L-inf gap over the prediction and every final modality state."""
    gap = _maxdiff(a.prediction, b.prediction)
    for m in a.states:
        gap = max(gap, _maxdiff(a.states[m], b.states[m]))
    return gap


def equiv_suite(trials: int = 100, seed: int = 2) -> dict:
    """GsiT versus MulT with encoders tied to GsiT's, plus an untied control."""
    worst = 0.0
    control = math.inf
    for trial in range(trials):
        rng = Rng.derive(seed, 0xE0, trial)
        cfg = random_model_config(rng)
        g = init_gsit(cfg, rng)
        v_m = Tensor2(rng.normal_matrix(cfg.layout.total, cfg.d))
        per = split_inputs(v_m, cfg.layout)
        ours = gsit_forward(g, v_m, cfg.layout)
        worst = max(worst, output_gap(ours, mult_forward(tie_weights(g), per)))
        untied = init_mult(cfg, rng)
        untied.f = g.f
        control = min(control, output_gap(ours, mult_forward(untied, per)))
    ok = worst <= EQUIV_TOL and control > NEGATIVE_MIN
    return _result(ok, worst, trials=trials, tolerance=EQUIV_TOL, untied_min_diff=control)


# ----------------------------------------------------------------- decomp


def all_patterns() -> list:
    out = []
    for name in StructureName:
        p = pattern_of(name)
        out.extend(p if isinstance(p, tuple) else (p,))
    return out


def decomp_suite(seeds: int = 50, seed: int = 3, memory_layouts: int = 20) -> dict:
    """Block execution versus dense masked attention, plus map-memory parity."""
    worst = 0.0
    patterns = all_patterns()
    for pattern in patterns:
        for s in range(seeds):
            rng = Rng.derive(seed, 0xDC, s)
            layout = SegmentLayout(tuple(_randint(rng, 1, 6) for _ in range(3)))
            d = _pick(rng, (4, 8))
            w = attn.init_encoder(rng, d, 2 * d, _pick(rng, (1, 2)))
            v_m = Tensor2(rng.normal_matrix(layout.total, d))
            block = blockexec.exec_stream(w, v_m, layout, pattern)
            dense = blockexec.dense_stream(w, v_m, layout, pattern)
            worst = max(worst, _maxdiff(block, dense))

    mem_fail = []
    for s in range(memory_layouts):
        rng = Rng.derive(seed, 0x3E, s)
        cfg = random_model_config(rng)
        measured: dict = {}
        v_m = Tensor2(rng.normal_matrix(cfg.layout.total, cfg.d))
        gsit_forward(init_gsit(cfg, rng), v_m, cfg.layout, decomposed=True, memory=measured)
        mult = complexity.mult_memory(cfg.layout, cfg.heads)
        pair_peak = max(v for k, v in mult.items() if k[0] != k[1])
        self_peak = max(v for k, v in mult.items() if k[0] == k[1])
        dense = cfg.heads * cfg.layout.total**2
        checks = (
            measured["forward"].block_peak <= pair_peak
            and max(measured["forward"].block_peak, measured["backward"].block_peak) == pair_peak,
            measured["intra"].block_peak == self_peak,
            all(m.dense_total == dense for m in measured.values()),
        )
        if not all(checks):
            mem_fail.append(str(cfg.layout))
    ok = worst <= DECOMP_TOL and not mem_fail
    return _result(ok, worst, patterns=len(patterns), seeds=seeds, tolerance=DECOMP_TOL,
                   memory_layouts=memory_layouts, memory_failures=mem_fail)


# ------------------------------------------------------------------ flops


def _measure(kind: str, cfg: ModelConfig, rng: Rng, decomposed: bool = False) -> blockexec.FlopMeter:
    meter = blockexec.FlopMeter()
    v_m = Tensor2(rng.normal_matrix(cfg.layout.total, cfg.d))
    if kind == "gsit":
        gsit_forward(init_gsit(cfg, rng), v_m, cfg.layout, cfg.structure, decomposed=decomposed, meter=meter)
    elif kind == "mult":
        mult_forward(init_mult(cfg, rng), split_inputs(v_m, cfg.layout), meter=meter)
    else:
        from gsitlab.models import init_naive, naive_forward

        naive_forward(init_naive(cfg, rng), v_m, cfg.layout, meter=meter)
    return meter


def flops_suite(configs: int = 5, seed: int = 4) -> dict:
    """Metered counts: GsiT (decomposed) equals MulT; all match closed forms;
    MulT stores exactly three times GsiT's fusion parameters."""
    worst = 0
    totals = []
    failures = []
    ratios = []
    for c in range(configs):
        rng = Rng.derive(seed, 0xF1, c)
        cfg = random_model_config(rng)
        g_meter = _measure("gsit", cfg, rng, decomposed=True)
        m_meter = _measure("mult", cfg, rng)
        worst = max(worst, abs(g_meter.total - m_meter.total))
        totals.append({"layout": str(cfg.layout), "gsit": g_meter.total, "mult": m_meter.total})
        cases = (
            ("gsit-decomposed", g_meter, complexity.flops_closed_form(cfg, "gsit", True)),
            ("gsit-dense", _measure("gsit", cfg, rng), complexity.flops_closed_form(cfg, "gsit", False)),
            ("mult", m_meter, complexity.flops_closed_form(cfg, "mult")),
            ("naive", _measure("naive", cfg, rng), complexity.flops_closed_form(cfg, "naive")),
        )
        for name, meter, predicted in cases:
            rep = complexity.reconcile(meter, predicted, strict=False)
            for m, p in rep.mismatches().values():
                worst = max(worst, abs(m - p))
            if not rep.ok:
                failures.append(f"{name}@{cfg.layout}")
        g_params = complexity.params(init_gsit(cfg, rng)).total
        m_params = complexity.params(init_mult(cfg, rng)).total
        ratios.append([m_params, g_params])
        if m_params != 3 * g_params:
            failures.append(f"params@d={cfg.d},p={cfg.p},L={cfg.heads}")
    parity = all(t["gsit"] == t["mult"] for t in totals)
    return _result(parity and not failures, worst, totals=totals, param_pairs=ratios, failures=failures)


# ------------------------------------------------------------------- grad


def _primitive_cases(rng: Rng):
    def mat(r, c):
        return rng.normal_matrix(r, c)

    def away_from_zero(r, c):
        x = mat(r, c)
        return np.where(np.abs(x) < 0.1, np.sign(x) * 0.1 + x, x)

    mask = np.zeros((3, 4))
    mask[0, 1] = mask[2, 3] = mask[1, 0] = -np.inf
    target = mat(3, 4)
    t = Tensor2(target)
    return {
        "matmul": (lambda x: mse(matmul(x[0], x[1]), t), [mat(3, 5), mat(5, 4)]),
        "bmm": (lambda x: mse(bmm(x[0], x[1], 3), Tensor2(target[:, :2])), [mat(3, 2), mat(6, 2)]),
        "bmm_nt": (lambda x: mse(bmm_nt(x[0], x[1], 3), Tensor2(target[:, :2])), [mat(3, 2), mat(6, 2)]),
        "add": (lambda x: mse(add(x[0], x[1]), t), [mat(3, 4), mat(3, 4)]),
        "scale": (lambda x: mse(scale(x[0], 0.37), t), [mat(3, 4)]),
        "transpose": (lambda x: mse(transpose(x[0]), t), [mat(4, 3)]),
        "softmax": (lambda x: mse(softmax_rows(x[0]), t), [mat(3, 4)]),
        "softmax-masked": (lambda x: mse(softmax_rows(x[0], Tensor2(mask)), t), [mat(3, 4)]),
        "relu": (lambda x: mse(relu(x[0]), t), [away_from_zero(3, 4)]),
        "concat_cols": (lambda x: mse(concat_cols([x[0], x[1]]), t), [mat(3, 1), mat(3, 3)]),
        "concat_rows": (lambda x: mse(concat_rows([x[0], x[1]]), t), [mat(1, 4), mat(2, 4)]),
        "split": (lambda x: mse(slice_cols(x[0], 1, 5), t), [mat(3, 6)]),
        "take_rows": (lambda x: mse(take_rows(x[0], [1, 0, 1]), t), [mat(2, 4)]),
        "sum": (lambda x: sum_all(x[0]), [mat(3, 4)]),
        "mse": (lambda x: mse(x[0], x[1]), [mat(3, 4), mat(3, 4)]),
    }


def gsit_loss_check(seed: int = 5) -> float:
    """Worst relative error of the full GsiT loss gradient at layout (2, 2, 2), d=4, L=1."""
    from gsitlab.models import GsiTWeights

    rng = Rng.derive(seed, 0x60)
    cfg = ModelConfig(SegmentLayout((2, 2, 2)), 4, 4, 1)
    g = init_gsit(cfg, rng)
    v_m = Tensor2(rng.normal_matrix(cfg.layout.total, cfg.d))
    y = Tensor2([[0.3]])
    names = []
    arrays = []
    for enc_name, enc in g.encoders():
        for n, tensor in enc.tensors():
            names.append((enc_name, n))
            arrays.append(tensor.data)
    arrays.append(g.f.data)

    def loss(ts):
        encs = {}
        for (enc_name, n), tensor in zip(names, ts):
            encs.setdefault(enc_name, {})[n] = tensor
        w = GsiTWeights(
            *(getattr(g, e).replace(**encs[e]) for e in ("forward", "backward", "intra")),
            f=ts[-1],
        )
        return mse(gsit_forward(w, v_m, cfg.layout).prediction, y)

    return fd_check(loss, arrays)


def grad_suite(seed: int = 5) -> dict:
    rng = Rng.derive(seed, 0x6D)
    errors = {name: fd_check(fn, arrays) for name, (fn, arrays) in _primitive_cases(rng).items()}
    errors["gsit-loss"] = gsit_loss_check(seed)
    worst = max(errors.values())
    return _result(worst <= GRAD_TOL, worst, tolerance=GRAD_TOL, relative_errors=errors)


# ------------------------------------------------------------------ masks


def masks_suite() -> dict:
    wrong = []
    for name, golden in GOLDEN_ALLOW.items():
        got = pattern_of(name)
        if isinstance(golden, tuple):
            got_sets = tuple(set(p.pairs()) for p in got)
        else:
            got_sets = set(got.pairs())
        if got_sets != golden:
            wrong.append(name)
    unsafe = []
    for p in all_patterns():
        if not validate(p).fusion_safe:
            unsafe.append(p.name)
    unit = SegmentLayout((1, 1, 1))
    zeros_ok = all(
        int(np.sum(materialize(p, unit).data == 0.0)) == len(p.allow) for p in all_patterns()
    )
    ok = not wrong and unsafe == ["self_only"] and zeros_ok
    return _result(ok, 0.0, golden_mismatches=wrong, disorder_prone=unsafe, unit_zero_count_ok=zeros_ok)


# --------------------------------------------------------------- disorder


def disorder_suite(trials: int = 50, layout: SegmentLayout = SegmentLayout((3, 4, 5)), d: int = 8) -> dict:
    residual = 0.0
    smallest = math.inf
    control = 0.0
    for s in range(1, trials + 1):
        rep = disorder_demo(s, layout, d)
        residual = max(residual, rep.identity_residual)
        smallest = min(smallest, rep.shared_deviation)
        control = max(control, disorder_demo(s, layout, d, suppress_ta=True).shared_deviation)
    ok = residual <= IDENTITY_TOLERANCE and smallest > DISORDER_MIN and control == 0.0
    return _result(ok, residual, trials=trials, min_deviation=smallest,
                   suppressed_max_deviation=control, tolerance=IDENTITY_TOLERANCE)


SUITES = {
    "equiv": equiv_suite,
    "graph": graph_suite,
    "decomp": decomp_suite,
    "flops": flops_suite,
    "grad": grad_suite,
    "masks": masks_suite,
    "disorder": disorder_suite,
}


def run_suites(names=None) -> dict:
    names = list(SUITES) if names in (None, "all", ["all"]) else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suites: {unknown}")
    return {n: SUITES[n]() for n in names}
