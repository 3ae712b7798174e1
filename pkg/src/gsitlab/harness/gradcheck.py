"""Central finite-difference checks against tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from gsitlab.numkit import Tape, Tensor2, grad

STEP = 1e-5
FLOOR = 1e-3


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    """max |g - fd| / max(|g|, |fd|, floor) over entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def fd_check(fn: Callable[[list[Tensor2]], Tensor2], arrays: Sequence[np.ndarray],
             step: float = STEP) -> float:
    """Worst relative error of ``grad`` versus central differences.

    ``fn`` maps a list of tensors to a ``1 x 1`` loss using numkit ops.
    """
    tape = Tape()
    leaves = [tape.watch(Tensor2(a)) for a in arrays]
    grads = grad(tape, fn(leaves), leaves)
    worst = 0.0
    for k, base in enumerate(arrays):
        base = np.asarray(base, dtype=np.float64)
        numeric = np.zeros(base.shape)
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1.0, -1.0):
                bumped = base.copy()
                bumped[idx] += sign * step
                args = [Tensor2(a) for a in arrays]
                args[k] = Tensor2(bumped)
                vals.append(fn(args).item())
            numeric[idx] = (vals[0] - vals[1]) / (2 * step)
        worst = max(worst, relative_error(grads[leaves[k]], numeric))
    return worst
