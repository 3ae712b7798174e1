"""Flat binary weight checkpoints.

Layout, all little-endian::

    b"GSIT1"
    u32 n_ints, then n_ints x i64 config ints
        (kind, T_t, T_v, T_a, d, p, heads, out_dim, structure)
    u32 n_arrays, then per array:
        u16 name length, utf-8 name, u32 rows, u32 cols, rows*cols x f64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from gsitlab.attn import EncoderWeights
from gsitlab.errors import GsitError
from gsitlab.maskgen import MODALITIES, SegmentLayout, StructureName
from gsitlab.models.weights import (
    CROSS_PAIRS,
    GsiTWeights,
    ModelConfig,
    MulTWeights,
    NaiveWeights,
)
from gsitlab.numkit import Tensor2

MAGIC = b"GSIT1"
KINDS = ("naive", "mult", "gsit")
_STRUCTURES = list(StructureName)


class CheckpointError(GsitError, ValueError):
    pass


def named_arrays(weights) -> list[tuple[str, Tensor2]]:
    """Weight arrays in declaration order."""
    if isinstance(weights, NaiveWeights):
        encs = [("encoder", weights.encoder)]
    else:
        encs = weights.encoders()
    out = [(f"{prefix}.{n}", t) for prefix, enc in encs for n, t in enc.tensors()]
    out.append(("f", weights.f))
    return out


def kind_of(weights) -> str:
    if isinstance(weights, NaiveWeights):
        return "naive"
    if isinstance(weights, MulTWeights):
        return "mult"
    if isinstance(weights, GsiTWeights):
        return "gsit"
    raise TypeError(f"not a weight container: {type(weights).__name__}")


def dumps(weights, cfg: ModelConfig) -> bytes:
    ints = [KINDS.index(kind_of(weights)), *cfg.layout.lengths, cfg.d, cfg.p, cfg.heads,
            cfg.out_dim, _STRUCTURES.index(cfg.structure)]
    buf = [MAGIC, struct.pack("<I", len(ints)), struct.pack(f"<{len(ints)}q", *ints)]
    arrays = named_arrays(weights)
    buf.append(struct.pack("<I", len(arrays)))
    for name, t in arrays:
        raw = name.encode()
        buf.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", t.rows, t.cols))
        buf.append(t.data.astype("<f8").tobytes())
    return b"".join(buf)


def loads(blob: bytes):
    """Return ``(kind, config, weights)``."""
    if not blob.startswith(MAGIC):
        raise CheckpointError("bad magic")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    def raw(n):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError("truncated checkpoint")
        pos += n
        return blob[pos - n:pos]

    (n_ints,) = take("<I")
    ints = take(f"<{n_ints}q")
    if n_ints != 9 or not 0 <= ints[0] < len(KINDS) or not 0 <= ints[8] < len(_STRUCTURES):
        raise CheckpointError("unrecognised header")
    kind = KINDS[ints[0]]
    try:
        cfg = ModelConfig(SegmentLayout(ints[1:4]), ints[4], ints[5], ints[6], ints[7], _STRUCTURES[ints[8]])
    except ValueError as exc:
        raise CheckpointError(f"bad configuration: {exc}") from None
    (n_arrays,) = take("<I")
    arrays = {}
    for _ in range(n_arrays):
        (n,) = take("<H")
        name = raw(n).decode()
        rows, cols = take("<II")
        data = np.frombuffer(raw(8 * rows * cols), dtype="<f8")
        arrays[name] = Tensor2(data.reshape(rows, cols))
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last array")
    return kind, cfg, _assemble(kind, cfg, arrays)


def _encoder(arrays, prefix, heads) -> EncoderWeights:
    try:
        return EncoderWeights(heads=heads, **{n: arrays[f"{prefix}.{n}"] for n in ("wq", "wk", "wv", "w1", "w2")})
    except KeyError as exc:
        raise CheckpointError(f"missing array {exc}") from None
    except ValueError as exc:
        raise CheckpointError(f"{prefix}: {exc}") from None


def _assemble(kind, cfg, arrays):
    if "f" not in arrays:
        raise CheckpointError("missing array 'f'")
    L = cfg.heads
    if kind == "naive":
        return NaiveWeights(_encoder(arrays, "encoder", L), arrays["f"])
    if kind == "gsit":
        return GsiTWeights(*(_encoder(arrays, k, L) for k in ("forward", "backward", "intra")), arrays["f"])
    cross = {(i, j): _encoder(arrays, f"cross.{i}{j}", L) for i, j in CROSS_PAIRS}
    self_ = {m: _encoder(arrays, f"self.{m}", L) for m in MODALITIES}
    return MulTWeights(cross, self_, arrays["f"])


def save(path, weights, cfg: ModelConfig):
    Path(path).write_bytes(dumps(weights, cfg))


def load(path):
    return loads(Path(path).read_bytes())
