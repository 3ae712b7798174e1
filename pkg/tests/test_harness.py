import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsitlab import attn
from gsitlab.errors import TrainingDiverged
from gsitlab.harness import (
    ConfigError,
    RunConfig,
    disorder_demo,
    gen_dataset,
    gen_sample,
    stack,
    train,
    weight_report,
)
from gsitlab.harness.cli import main
from gsitlab.harness.data import SIGNAL_CHANNEL
from gsitlab.maskgen import SegmentLayout, StructureName
from gsitlab.models import ModelConfig, init_gsit, named_arrays
from gsitlab.numkit import Rng, Tensor2, moments

LAYOUT = SegmentLayout((4, 5, 6))


def _r2(features, y):
    x = np.column_stack([features, np.ones(len(y))])
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    return 1.0 - resid.var() / y.var()


# ------------------------------------------------------------------- data


def test_sample_is_deterministic():
    a = gen_sample(3, 17, LAYOUT, 8)
    b = gen_sample(3, 17, LAYOUT, 8)
    assert a.target == b.target
    for x, y in zip(a.inputs, b.inputs):
        assert np.array_equal(x.numpy(), y.numpy())
    assert not np.array_equal(a.vt.numpy(), gen_sample(3, 18, LAYOUT, 8).vt.numpy())


def test_shapes_and_target_range():
    samples = gen_dataset(1, 30, LAYOUT, 8)
    assert all(-1.0 <= s.target <= 1.0 for s in samples)
    assert [x.shape for x in samples[0].inputs] == [(4, 8), (5, 8), (6, 8)]
    v_m, per, y = stack(samples)
    assert v_m.shape == (30 * 15, 8) and y.shape == (30, 1)
    assert np.array_equal(per[1].numpy()[:5], samples[0].vv.numpy())


def test_forced_zero_target_leaves_zero_mean_noise():
    vals = []
    for i in range(400):
        s = gen_sample(9, i, LAYOUT, 8, target=0.0)
        for m, x in zip("tva", s.inputs):
            vals.append(x.numpy()[-1, SIGNAL_CHANNEL[m]])
    assert abs(np.mean(vals)) < 0.06


def test_fusion_needed_to_denoise_target():
    samples = gen_dataset(11, 2000, LAYOUT, 8, noise=0.3)
    y = np.array([s.target for s in samples])
    for k, m in enumerate("tva"):
        last = np.array([s.inputs[k].numpy()[-1] for s in samples])
        assert _r2(last, y) < 0.6
    avg = np.array([
        np.mean([s.inputs[k].numpy()[-1, SIGNAL_CHANNEL[m]] for k, m in enumerate("tva")])
        for s in samples
    ])
    assert _r2(avg[:, None], y) > 0.9


def test_dataset_size_checked():
    with pytest.raises(ValueError):
        gen_dataset(1, 0, LAYOUT, 8)


# ----------------------------------------------------------------- config


configs = st.builds(
    RunConfig,
    kind=st.sampled_from(["gsit", "mult", "naive"]),
    layout=st.tuples(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9)).map(SegmentLayout),
    d=st.sampled_from([4, 8]),
    heads=st.sampled_from([1, 2]),
    structure=st.sampled_from(list(StructureName)),
    seed=st.integers(0, 2**31),
    steps=st.integers(0, 1000),
    lr=st.floats(0, 1, allow_nan=False),
    noise=st.floats(0, 2, allow_nan=False),
    curve_path=st.one_of(st.none(), st.just("curve.csv")),
)


@given(configs)
def test_config_text_round_trip(cfg):
    text = cfg.to_text()
    again = RunConfig.from_text(text)
    assert again == cfg
    assert again.to_text() == text


@pytest.mark.parametrize("text", ["[model]\nwidth = 3\n", "[optim]\nlr = 0.1\n", "[train]\nsteps = many\n"])
def test_config_rejects_unknown_or_bad(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_config_overrides_and_partial_file():
    cfg = RunConfig.from_text("[train]\nsteps = 12\n[model]\nlayout = 1,2,3\n")
    assert cfg.steps == 12 and cfg.layout == SegmentLayout((1, 2, 3)) and cfg.d == 8
    assert cfg.with_overrides(steps=3, lr=None).steps == 3
    with pytest.raises(ConfigError):
        cfg.with_overrides(momentum=0.9)


# ------------------------------------------------------------------ train


SMALL = RunConfig(layout=SegmentLayout((2, 2, 3)), d=4, p=8, heads=1, samples=8, batch=8, steps=6)


@pytest.mark.parametrize("kind", ["gsit", "mult", "naive"])
def test_zero_learning_rate_keeps_loss_constant(kind):
    res = train(kind, SMALL.with_overrides(lr=0.0))
    assert len(set(res.losses)) == 1
    assert res.final_loss == res.losses[0]


def test_training_is_deterministic_and_descends():
    a = train("gsit", SMALL.with_overrides(steps=30))
    b = train("gsit", SMALL.with_overrides(steps=30))
    assert a.curve_csv() == b.curve_csv()
    assert a.losses[-1] < a.losses[0]


def test_minibatches_cycle():
    res = train("mult", SMALL.with_overrides(batch=3, steps=5))
    assert len(res.losses) == 5 and all(np.isfinite(res.losses))


def test_divergence_reports_step():
    with pytest.raises(TrainingDiverged) as exc:
        train("gsit", SMALL.with_overrides(lr=1e8, steps=50))
    assert 0 <= exc.value.step < 50


def test_curve_csv_format():
    res = train("naive", SMALL.with_overrides(steps=2))
    lines = res.curve_csv().splitlines()
    assert lines[0] == "step,loss" and lines[1].startswith("0,") and len(lines) == 3


# --------------------------------------------------------------- disorder


def test_disorder_deviation_positive_and_identity_holds():
    for seed in (1, 2, 3):
        rep = disorder_demo(seed, SegmentLayout((3, 4, 5)), 8)
        assert rep.shared_deviation > 1e-3
        assert rep.identity_residual <= 1e-12
        assert rep.deviation["v"] == rep.deviation["a"] == 0.0
        assert rep.verdict == "disorder"


def test_suppressed_audio_columns_mean_no_disorder():
    rep = disorder_demo(4, SegmentLayout((3, 4, 5)), 8, suppress_ta=True)
    assert rep.shared_deviation == 0.0 and rep.verdict == "no-disorder"


@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_identity_residual_tiny_for_any_seed(seed, heads):
    assert disorder_demo(seed, SegmentLayout((2, 3, 2)), 4, heads).identity_residual <= 1e-12


# ------------------------------------------------------------------ stats


def test_zero_encoder_flagged_degenerate():
    z = Tensor2(np.zeros((4, 4)))
    w = attn.EncoderWeights(z, z, z, Tensor2(np.zeros((4, 8))), Tensor2(np.zeros((8, 4))), 1)
    rep = weight_report(w)
    assert rep.degenerate["encoder"] and rep.stats["encoder"] is None


def test_small_gaussian_weights_moments():
    w = attn.init_encoder(Rng(21), 8, 16, 2, std=0.02)
    s = weight_report(w).stats["encoder"]
    assert abs(s.mean) < 0.005
    assert abs(s.variance - 4e-4) < 0.2 * 4e-4


def test_report_delegates_to_moments():
    cfg = ModelConfig(LAYOUT, 8, 16, 2)
    g = init_gsit(cfg, Rng(5))
    rep = weight_report(g)
    assert set(rep.stats) == {"forward", "backward", "intra", "all"}
    flat = np.concatenate([t.numpy().ravel() for n, t in named_arrays(g) if n.startswith("intra.")])
    assert rep.stats["intra"] == moments(flat)
    everything = np.concatenate([t.numpy().ravel() for n, t in named_arrays(g) if n != "f"])
    assert rep.stats["all"] == moments(everything)


# -------------------------------------------------------------------- cli


def _run(argv):
    buf = io.StringIO()
    code = main(argv, out=buf)
    return code, buf.getvalue()


def test_cli_masks_ascii_example():
    code, text = _run(["masks", "--structure", "original", "--layout", "1,1,1", "--emit", "ascii"])
    assert code == 0
    assert text == "   t  v  a\nt  .  A  .\nv  .  .  A\na  A  .  .\n"


def test_cli_masks_csv_both_streams():
    code, text = _run(["masks", "--structure", "s2", "--layout", "1,2,1", "--emit", "csv", "--stream", "both"])
    assert code == 0
    assert text.count("# ") == 2 and "-inf" in text


def test_cli_bench_example():
    code, text = _run(["bench", "--layout", "2,3,4", "--dim", "8"])
    assert code == 0
    report = json.loads(text)
    assert set(report) == {"config", "suites", "flops", "memory", "params"}
    assert report["memory"]["dense_total"] == 81 and report["memory"]["block_sum"] == 26
    assert report["params"]["ratio"] == 3.0
    assert report["flops"]["gsit"]["total"] == report["flops"]["mult"]["total"]
    assert all(s["pass"] for s in report["suites"].values())


def test_cli_verify_equiv():
    code, text = _run(["verify", "--suite", "equiv"])
    report = json.loads(text)
    assert code == 0 and report["pass"] and report["suites"]["equiv"]["pass"]


def test_cli_verify_failure_exits_one(monkeypatch, capsys):
    from gsitlab.harness import suites

    monkeypatch.setitem(suites.SUITES, "masks", lambda: {"pass": False, "max_abs_diff": 1.0, "details": {}})
    code, _ = _run(["verify", "--suite", "masks"])
    assert code == 1
    assert "masks" in capsys.readouterr().err


def test_cli_usage_errors():
    assert _run(["frobnicate"])[0] == 2
    assert _run(["masks", "--structure", "nope"])[0] == 2
    assert _run(["bench", "--layout", "1,1", "--dim", "4"])[0] == 2
    assert _run(["bench", "--layout", "1,1,1", "--dim", "6", "--heads", "4"])[0] == 2


def test_cli_disorder():
    code, text = _run(["disorder", "--seed", "2", "--layout", "3,4,5", "--dim", "8"])
    rep = json.loads(text)
    assert code == 0 and rep["verdict"] == "disorder" and rep["deviation"]["t"] > 1e-3


def test_cli_train_outputs_are_byte_identical(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL.to_text())
    outs = []
    for k in range(2):
        curve = tmp_path / f"c{k}.csv"
        ckpt = tmp_path / f"w{k}.bin"
        code, text = _run(["train", "--config", str(cfg), "--model", "mult", "--steps", "4",
                           "--out", str(curve), "--checkpoint", str(ckpt)])
        assert code == 0 and "final_mse" in text
        outs.append((curve.read_bytes(), ckpt.read_bytes(), text))
    assert outs[0] == outs[1]
    assert outs[0][0].decode().count("\n") == 5


def test_cli_train_divergence_exit_code(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL.to_text())
    assert _run(["train", "--config", str(cfg), "--lr", "1e8", "--steps", "50"])[0] == 1
