"""Deterministic numeric core: tensors, tape autodiff, PRNG, moments."""

from gsitlab.numkit.rng import Rng
from gsitlab.numkit.stats import MomentStats, moments
from gsitlab.numkit.tensor import (
    Tape,
    Tensor2,
    add,
    bmm,
    bmm_nt,
    concat_cols,
    concat_rows,
    grad,
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

__all__ = [
    "Rng",
    "MomentStats",
    "moments",
    "Tape",
    "Tensor2",
    "add",
    "bmm",
    "bmm_nt",
    "concat_cols",
    "concat_rows",
    "grad",
    "matmul",
    "mse",
    "relu",
    "scale",
    "slice_cols",
    "softmax_rows",
    "sum_all",
    "take_rows",
    "transpose",
]
