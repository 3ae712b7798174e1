"""Naive graph model, MulT forest and GsiT, plus weight tying."""

from gsitlab.models.checkpoint import load, named_arrays, save
from gsitlab.models.forward import (
    ModelOutput,
    gsit_forward,
    join_inputs,
    mult_forward,
    naive_forward,
    split_inputs,
)
from gsitlab.models.weights import (
    BACKWARD_PAIRS,
    CROSS_PAIRS,
    FORWARD_PAIRS,
    GsiTWeights,
    ModelConfig,
    MulTWeights,
    NaiveWeights,
    init_gsit,
    init_mult,
    init_naive,
    map_weights,
    tie_weights,
)

__all__ = [
    "BACKWARD_PAIRS",
    "CROSS_PAIRS",
    "FORWARD_PAIRS",
    "GsiTWeights",
    "ModelConfig",
    "ModelOutput",
    "MulTWeights",
    "NaiveWeights",
    "gsit_forward",
    "init_gsit",
    "init_mult",
    "init_naive",
    "join_inputs",
    "load",
    "map_weights",
    "mult_forward",
    "naive_forward",
    "named_arrays",
    "save",
    "split_inputs",
    "tie_weights",
]
