"""Plain gradient-descent training on the synthetic regression task."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from gsitlab.errors import DegenerateRowError, TrainingDiverged
from gsitlab.harness.config import RunConfig
from gsitlab.harness.data import gen_dataset, stack
from gsitlab.models import (
    gsit_forward,
    init_gsit,
    init_mult,
    init_naive,
    map_weights,
    mult_forward,
    naive_forward,
)
from gsitlab.numkit import Rng, Tape, Tensor2, grad, mse, take_rows

_INIT = {"gsit": init_gsit, "mult": init_mult, "naive": init_naive}


@dataclass
class TrainResult:
    losses: list[float]
    final_loss: float
    weights: object

    def curve_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,loss\n")
        for step, loss in enumerate(self.losses):
            buf.write(f"{step},{loss!r}\n")
        return buf.getvalue()


def predict(kind: str, weights, cfg: RunConfig, v_m: Tensor2, per, batch: int) -> Tensor2:
    if kind == "gsit":
        return gsit_forward(weights, v_m, cfg.layout, cfg.structure, batch=batch).prediction
    if kind == "mult":
        return mult_forward(weights, per, batch=batch).prediction
    return naive_forward(weights, v_m, cfg.layout, batch=batch).prediction


def _batch_rows(cfg: RunConfig, step: int) -> np.ndarray | None:
    if cfg.batch == cfg.samples:
        return None
    return (step * cfg.batch + np.arange(cfg.batch)) % cfg.samples


def _select(v_m, per, y, cfg: RunConfig, idx):
    if idx is None:
        return v_m, per, y
    T = cfg.layout.total

    def rows(x: Tensor2, n: int) -> Tensor2:
        return take_rows(x, [i * n + r for i in idx for r in range(n)])

    per_b = tuple(rows(x, n) for x, n in zip(per, cfg.layout.lengths))
    return rows(v_m, T), per_b, take_rows(y, idx)


def loss_of(kind, weights, cfg, v_m, per, y, batch) -> Tensor2:
    return mse(predict(kind, weights, cfg, v_m, per, batch), y)


def train(kind: str, cfg: RunConfig, log=None) -> TrainResult:
    """Gradient descent on MSE. Step ``s`` logs the loss before its update."""
    samples = gen_dataset(cfg.seed, cfg.samples, cfg.layout, cfg.d, noise=cfg.noise, spread=cfg.spread)
    v_m, per, y = stack(samples)
    weights = _INIT[kind](cfg.model_config(), Rng.derive(cfg.seed, 0x5EED))

    losses = []
    for step in range(cfg.steps):
        bv, bp, by = _select(v_m, per, y, cfg, _batch_rows(cfg, step))
        tape = Tape()
        tracked = map_weights(weights, tape.watch)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss = loss_of(kind, tracked, cfg, bv, bp, by, cfg.batch)
        except DegenerateRowError:
            # overflowed logits leave no finite softmax entry
            raise TrainingDiverged(step, math.nan) from None
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(step, value)
        losses.append(value)
        grads = grad(tape, loss)
        lookup = {id(leaf): g for leaf, g in grads.items()}
        with np.errstate(over="ignore", invalid="ignore"):
            weights = map_weights(tracked, lambda t: Tensor2(t.data - cfg.lr * lookup[id(t)]))
        if log is not None and (step % 50 == 0 or step == cfg.steps - 1):
            log(f"step {step:4d}  loss {value:.6f}")

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            final = loss_of(kind, weights, cfg, v_m, per, y, cfg.samples).item()
    except DegenerateRowError:
        final = math.nan
    if not math.isfinite(final):
        raise TrainingDiverged(cfg.steps, final)
    return TrainResult(losses, final, weights)
