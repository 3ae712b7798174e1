from __future__ import annotations

import math
from dataclasses import dataclass

from gsitlab.attn import EncoderWeights, init_encoder
from gsitlab.errors import ShapeError
from gsitlab.maskgen import MODALITIES, SegmentLayout, StructureName
from gsitlab.numkit import Rng, Tensor2

# (dominant, auxiliary) pairs, forward cycle first: t<-v, v<-a, a<-t
FORWARD_PAIRS = (("t", "v"), ("v", "a"), ("a", "t"))
BACKWARD_PAIRS = (("t", "a"), ("v", "t"), ("a", "v"))
CROSS_PAIRS = FORWARD_PAIRS + BACKWARD_PAIRS
FORWARD_PARTNER = dict(FORWARD_PAIRS)
BACKWARD_PARTNER = dict(BACKWARD_PAIRS)


@dataclass(frozen=True)
class ModelConfig:
    layout: SegmentLayout
    d: int
    p: int
    heads: int
    out_dim: int = 1
    structure: StructureName = StructureName.ORIGINAL

    def __post_init__(self):
        if self.d % self.heads or (2 * self.d) % self.heads:
            raise ShapeError(f"width {self.d} not divisible by {self.heads} heads")
        if self.p < self.d:
            raise ShapeError(f"hidden width {self.p} below model width {self.d}")
        if self.out_dim < 1:
            raise ShapeError("out_dim must be positive")


@dataclass
class NaiveWeights:
    encoder: EncoderWeights
    f: Tensor2


@dataclass
class MulTWeights:
    cross: dict  # (dominant, auxiliary) -> EncoderWeights at width d
    self_: dict  # modality -> EncoderWeights at width 2d
    f: Tensor2

    def __post_init__(self):
        if set(self.cross) != set(CROSS_PAIRS):
            raise ShapeError(f"cross encoders must cover {CROSS_PAIRS}, got {sorted(self.cross)}")
        if set(self.self_) != set(MODALITIES):
            raise ShapeError("self encoders must be keyed by t, v, a")

    def encoders(self) -> list[tuple[str, EncoderWeights]]:
        out = [(f"cross.{i}{j}", self.cross[(i, j)]) for i, j in CROSS_PAIRS]
        out += [(f"self.{m}", self.self_[m]) for m in MODALITIES]
        return out


@dataclass
class GsiTWeights:
    forward: EncoderWeights
    backward: EncoderWeights
    intra: EncoderWeights
    f: Tensor2

    def encoders(self) -> list[tuple[str, EncoderWeights]]:
        return [("forward", self.forward), ("backward", self.backward), ("intra", self.intra)]


def _head(rng: Rng, rows: int, out_dim: int) -> Tensor2:
    return Tensor2(rng.normal_matrix(rows, out_dim, std=1.0 / math.sqrt(rows)))


def init_naive(cfg: ModelConfig, rng: Rng) -> NaiveWeights:
    enc = init_encoder(rng, cfg.d, cfg.p, cfg.heads)
    return NaiveWeights(enc, _head(rng, 3 * cfg.d, cfg.out_dim))


def init_gsit(cfg: ModelConfig, rng: Rng) -> GsiTWeights:
    fwd = init_encoder(rng, cfg.d, cfg.p, cfg.heads)
    bwd = init_encoder(rng, cfg.d, cfg.p, cfg.heads)
    intra = init_encoder(rng, 2 * cfg.d, 2 * cfg.p, cfg.heads)
    return GsiTWeights(fwd, bwd, intra, _head(rng, 6 * cfg.d, cfg.out_dim))


def init_mult(cfg: ModelConfig, rng: Rng) -> MulTWeights:
    cross = {pair: init_encoder(rng, cfg.d, cfg.p, cfg.heads) for pair in CROSS_PAIRS}
    self_ = {m: init_encoder(rng, 2 * cfg.d, 2 * cfg.p, cfg.heads) for m in MODALITIES}
    return MulTWeights(cross, self_, _head(rng, 6 * cfg.d, cfg.out_dim))


def tie_weights(g: GsiTWeights) -> MulTWeights:
    """MulT whose encoders alias the GsiT ones (no copies)."""
    cross = {pair: g.forward for pair in FORWARD_PAIRS}
    cross.update({pair: g.backward for pair in BACKWARD_PAIRS})
    return MulTWeights(cross, {m: g.intra for m in MODALITIES}, g.f)


def map_weights(weights, fn):
    """Rebuild a weight container with ``fn`` applied to every distinct tensor.

    Aliased tensors (tied encoders) are mapped once and stay aliased.
    """
    memo: dict = {}

    def conv(t: Tensor2) -> Tensor2:
        key = id(t)
        if key not in memo:
            memo[key] = (t, fn(t))
        return memo[key][1]

    def enc(e: EncoderWeights) -> EncoderWeights:
        key = id(e)
        if key not in memo:
            memo[key] = (e, e.replace(**{n: conv(t) for n, t in e.tensors()}))
        return memo[key][1]

    if isinstance(weights, NaiveWeights):
        return NaiveWeights(enc(weights.encoder), conv(weights.f))
    if isinstance(weights, GsiTWeights):
        return GsiTWeights(enc(weights.forward), enc(weights.backward), enc(weights.intra), conv(weights.f))
    if isinstance(weights, MulTWeights):
        return MulTWeights(
            {k: enc(e) for k, e in weights.cross.items()},
            {k: enc(e) for k, e in weights.self_.items()},
            conv(weights.f),
        )
    raise TypeError(f"not a weight container: {type(weights).__name__}")
