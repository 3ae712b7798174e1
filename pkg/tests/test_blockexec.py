import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsitlab import attn, blockexec
from gsitlab.errors import AccountingError, DegenerateRowError
from gsitlab.maskgen import BlockPattern, SegmentLayout, StructureName, pattern_of
from gsitlab.models import ModelConfig, gsit_forward, init_gsit
from gsitlab.numkit import Rng, Tensor2

lengths = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))


def _patterns():
    out = []
    for name in StructureName:
        p = pattern_of(name)
        out.extend(p if isinstance(p, tuple) else (p,))
    return out


@given(lengths, st.integers(0, 10**6), st.sampled_from(_patterns()), st.sampled_from([1, 2]))
def test_block_execution_equals_dense(ls, seed, pattern, heads):
    lay = SegmentLayout(ls)
    rng = Rng(seed)
    w = attn.init_encoder(rng, 4, 8, heads)
    x = Tensor2(rng.normal_matrix(lay.total, 4))
    a = blockexec.exec_stream(w, x, lay, pattern).numpy()
    b = blockexec.dense_stream(w, x, lay, pattern).numpy()
    assert np.max(np.abs(a - b)) <= 1e-12


def test_row_group_without_blocks_rejected():
    with pytest.raises(DegenerateRowError):
        blockexec.row_groups(BlockPattern.from_pairs("tv va"))


def test_memory_report_example():
    mem = blockexec.memory_report(SegmentLayout((2, 3, 4)), pattern_of("original")[0], 1)
    assert mem.dense_total == 81
    assert mem.block_sum == 2 * 3 + 3 * 4 + 4 * 2
    assert mem.block_peak == 12


def test_measured_memory_matches_report():
    lay = SegmentLayout((2, 3, 4))
    cfg = ModelConfig(lay, 4, 8, 2)
    rng = Rng(1)
    mem = {}
    gsit_forward(init_gsit(cfg, rng), Tensor2(rng.normal_matrix(9, 4)), lay, decomposed=True, memory=mem)
    assert mem["forward"] == blockexec.memory_report(lay, pattern_of("original")[0], 2)
    assert mem["intra"] == blockexec.memory_report(lay, pattern_of("iem"), 2)


def test_meter_single_pass_contract():
    meter = blockexec.FlopMeter()
    with pytest.raises(AccountingError):
        blockexec.flop_report(meter)
    meter.begin_pass()
    with pytest.raises(AccountingError):
        meter.begin_pass()
    meter.reset()
    meter.begin_pass()
    assert blockexec.flop_report(meter)["total"] == 0


def test_meter_rejects_unknown_phase_and_negative_counts():
    meter = blockexec.FlopMeter()
    with pytest.raises(KeyError):
        meter.at("dropout")
    with pytest.raises(AccountingError):
        meter.at("mlp").add(-1)


def test_meter_stage_context():
    meter = blockexec.FlopMeter()
    with meter.in_stage("head"):
        meter.at("final-projection").add(6)
    meter.at("mlp").add(2)
    assert meter.snapshot() == {"head/final-projection": 6, "stage1/mlp": 2}


def test_flop_report_phase_rollup():
    lay = SegmentLayout((1, 2, 1))
    cfg = ModelConfig(lay, 4, 4, 1)
    meter = blockexec.FlopMeter()
    rng = Rng(2)
    gsit_forward(init_gsit(cfg, rng), Tensor2(rng.normal_matrix(4, 4)), lay, decomposed=True, meter=meter)
    rep = blockexec.flop_report(meter)
    assert sum(rep["phases"].values()) == rep["total"] == meter.total
    assert set(rep["phases"]) == set(blockexec.PHASES)
