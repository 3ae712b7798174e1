"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from gsitlab import complexity
from gsitlab.errors import GsitError, TrainingDiverged
from gsitlab.harness.config import ConfigError, RunConfig
from gsitlab.harness.disorder import disorder_demo
from gsitlab.harness.suites import SUITES, _measure, run_suites
from gsitlab.maskgen import (
    BlockPattern,
    SegmentLayout,
    StructureName,
    materialize,
    pattern_of,
    render_ascii,
    render_csv,
)
from gsitlab.models import ModelConfig, init_gsit, init_mult, save
from gsitlab.numkit import Rng

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _layout(text: str) -> SegmentLayout:
    try:
        return SegmentLayout.parse(text)
    except (ValueError, GsitError) as exc:
        raise argparse.ArgumentTypeError(f"bad layout {text!r}: {exc}") from None


def _structure(text: str) -> StructureName:
    try:
        return StructureName.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown structure {text!r}") from None


def _fail(out, names) -> int:
    print("FAILED: " + ", ".join(names), file=sys.stderr)
    return EXIT_FAILED


# ----------------------------------------------------------------- verify


def cmd_verify(args, out) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names)
    out.write(_dump({"suites": results, "pass": all(r["pass"] for r in results.values())}))
    failed = [n for n, r in results.items() if not r["pass"]]
    return _fail(out, failed) if failed else EXIT_OK


# ------------------------------------------------------------------ bench


def _check(ok: bool, diff, **details) -> dict:
    return {"pass": bool(ok), "max_abs_diff": float(diff), "details": details}


def bench_report(cfg: ModelConfig, seed: int = 0) -> dict:
    rng = Rng.derive(seed, 0xBE)
    g_meter = _measure("gsit", cfg, rng, decomposed=True)
    d_meter = _measure("gsit", cfg, rng)
    m_meter = _measure("mult", cfg, rng)

    suites = {}
    suites["flop-parity"] = _check(g_meter.total == m_meter.total, abs(g_meter.total - m_meter.total),
                                   gsit=g_meter.total, mult=m_meter.total)
    for name, meter, kind, dec in (("reconcile-gsit", g_meter, "gsit", True),
                                   ("reconcile-gsit-dense", d_meter, "gsit", False),
                                   ("reconcile-mult", m_meter, "mult", False)):
        rep = complexity.reconcile(meter, complexity.flops_closed_form(cfg, kind, dec), strict=False)
        gaps = [abs(m - p) for m, p in rep.mismatches().values()]
        suites[name] = _check(rep.ok, max(gaps, default=0), mismatches=sorted(rep.mismatches()))

    streams = complexity.gsit_memory(cfg.layout, cfg.heads, cfg.structure)
    mult_maps = complexity.mult_memory(cfg.layout, cfg.heads)
    pair_peak = max(v for k, v in mult_maps.items() if k[0] != k[1])
    self_peak = max(v for k, v in mult_maps.items() if k[0] == k[1])
    stage1_peak = max(streams["forward"].block_peak, streams["backward"].block_peak)
    suites["memory-parity"] = _check(
        stage1_peak == pair_peak and streams["intra"].block_peak == self_peak,
        max(abs(stage1_peak - pair_peak), abs(streams["intra"].block_peak - self_peak)),
        mult_pair_peak=pair_peak, mult_self_peak=self_peak,
    )

    g_params = complexity.params(init_gsit(cfg, rng)).total
    m_params = complexity.params(init_mult(cfg, rng)).total
    memory = streams["forward"].as_dict()
    memory["streams"] = {k: v.as_dict() for k, v in streams.items()}
    return {
        "config": {
            "layout": str(cfg.layout), "dim": cfg.d, "hidden": cfg.p,
            "heads": cfg.heads, "structure": cfg.structure.value,
        },
        "suites": suites,
        "flops": {
            "gsit": complexity.ComplexityBreakdown("gsit", True, g_meter.snapshot()).terms | {"total": g_meter.total},
            "gsit_dense": complexity.ComplexityBreakdown("gsit", False, d_meter.snapshot()).terms | {"total": d_meter.total},
            "mult": complexity.ComplexityBreakdown("mult", False, m_meter.snapshot()).terms | {"total": m_meter.total},
        },
        "memory": memory,
        "params": {"mult": m_params, "gsit": g_params, "ratio": m_params / g_params},
    }


def cmd_bench(args, out) -> int:
    hidden = args.hidden if args.hidden is not None else 2 * args.dim
    try:
        cfg = ModelConfig(args.layout, args.dim, hidden, args.heads, structure=args.structure)
    except GsitError as exc:
        raise UsageError(str(exc)) from None
    report = bench_report(cfg)
    if args.emit == "json":
        out.write(_dump(report))
    else:
        for name, res in report["suites"].items():
            out.write(f"{name:22s} {'pass' if res['pass'] else 'FAIL'}\n")
        for model, terms in report["flops"].items():
            out.write(f"flops {model:10s} {terms['total']}\n")
        m = report["memory"]
        out.write(f"memory dense={m['dense_total']} block_sum={m['block_sum']} block_peak={m['block_peak']}\n")
        p = report["params"]
        out.write(f"params mult={p['mult']} gsit={p['gsit']} ratio={p['ratio']}\n")
    failed = [n for n, r in report["suites"].items() if not r["pass"]]
    return _fail(out, failed) if failed else EXIT_OK


# ------------------------------------------------------------------ train


def cmd_train(args, out) -> int:
    from gsitlab.harness.train import train

    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(
            kind=args.model, structure=args.structure, steps=args.steps, lr=args.lr,
            seed=args.seed, curve_path=args.out, checkpoint_path=args.checkpoint,
        )
    except (ConfigError, OSError) as exc:
        raise UsageError(str(exc)) from None
    try:
        result = train(cfg.kind, cfg)
    except TrainingDiverged as exc:
        print(str(exc), file=sys.stderr)
        return _fail(out, ["training-finite"])
    if cfg.curve_path:
        Path(cfg.curve_path).write_text(result.curve_csv())
    if cfg.checkpoint_path:
        save(cfg.checkpoint_path, result.weights, cfg.model_config())
    out.write(f"model {cfg.kind} steps {cfg.steps} final_mse {result.final_loss!r}\n")
    return EXIT_OK


# ------------------------------------------------------------------ masks


def _patterns(name: StructureName) -> list[tuple[str, BlockPattern]]:
    p = pattern_of(name)
    if isinstance(p, BlockPattern):
        return [(name.value, p)]
    return [("forward", p[0]), ("backward", p[1])]


def cmd_masks(args, out) -> int:
    pats = _patterns(args.structure)
    if args.stream != "both":
        pats = [(label, p) for label, p in pats if label == args.stream] or pats
    blocks = []
    for label, p in pats:
        body = render_ascii(p) if args.emit == "ascii" else render_csv(materialize(p, args.layout))
        blocks.append(f"# {label}\n{body}\n" if len(pats) > 1 else body + "\n")
    out.write("\n".join(blocks))
    return EXIT_OK


# --------------------------------------------------------------- disorder


def cmd_disorder(args, out) -> int:
    rep = disorder_demo(args.seed, args.layout, args.dim, args.heads)
    out.write(_dump(rep.as_dict()))
    if rep.verdict == "identity-violated":
        return _fail(out, ["renormalization-identity"])
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsitlab", description="MulT / GsiT fusion lab")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run self-verification suites")
    v.add_argument("--suite", choices=["all", *SUITES], default="all")
    v.set_defaults(run=cmd_verify)

    b = sub.add_parser("bench", help="operation, memory and parameter accounting")
    b.add_argument("--layout", type=_layout, required=True)
    b.add_argument("--dim", type=int, required=True)
    b.add_argument("--hidden", type=int, default=None, help="MLP hidden width (default 2*dim)")
    b.add_argument("--heads", type=int, default=1)
    b.add_argument("--structure", type=_structure, default=StructureName.ORIGINAL)
    b.add_argument("--emit", choices=["json", "text"], default="json")
    b.set_defaults(run=cmd_bench)

    t = sub.add_parser("train", help="SGD on the synthetic regression task")
    t.add_argument("--model", choices=["gsit", "mult", "naive"], default=None)
    t.add_argument("--structure", type=_structure, default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None, help="loss curve CSV")
    t.add_argument("--checkpoint", default=None)
    t.add_argument("--config", default=None, help="key = value config file")
    t.set_defaults(run=cmd_train)

    m = sub.add_parser("masks", help="print block patterns or dense masks")
    m.add_argument("--structure", type=_structure, required=True)
    m.add_argument("--layout", type=_layout, default=SegmentLayout((1, 1, 1)))
    m.add_argument("--emit", choices=["ascii", "csv"], default="ascii")
    m.add_argument("--stream", choices=["forward", "backward", "both"], default="forward",
                   help="which stage-1 pattern of a fusion structure to show")
    m.set_defaults(run=cmd_masks)

    d = sub.add_parser("disorder", help="information-disorder demonstration")
    d.add_argument("--seed", type=int, default=1)
    d.add_argument("--layout", type=_layout, default=SegmentLayout((3, 4, 5)))
    d.add_argument("--dim", type=int, default=8)
    d.add_argument("--heads", type=int, default=1)
    d.set_defaults(run=cmd_disorder)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.run(args, out)
    except (UsageError, GsitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
