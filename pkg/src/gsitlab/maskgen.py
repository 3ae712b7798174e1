"""Segment layouts, block patterns and dense additive masks.

A :class:`BlockPattern` is a 3x3 Allow/Deny grid over the modality blocks
of the concatenated sequence (text, vision, audio). Grid cell ``(i, j)``
means "rows of modality ``i`` may attend to columns of modality ``j``",
i.e. information flows j -> i.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from gsitlab.errors import ShapeError
from gsitlab.numkit import Tensor2

MODALITIES = ("t", "v", "a")
_INDEX = {m: k for k, m in enumerate(MODALITIES)}


def modality_index(m: str | int) -> int:
    if isinstance(m, int):
        if not 0 <= m < 3:
            raise ValueError(f"modality index {m} out of range")
        return m
    return _INDEX[m]


@dataclass(frozen=True)
class SegmentLayout:
    lengths: tuple[int, int, int]

    def __post_init__(self):
        lengths = tuple(int(n) for n in self.lengths)
        if len(lengths) != 3 or min(lengths) < 1:
            raise ShapeError(f"layout needs three positive lengths, got {self.lengths}")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def parse(cls, text: str) -> "SegmentLayout":
        return cls(tuple(int(x) for x in text.split(",")))

    @property
    def offsets(self) -> tuple[int, int, int]:
        t, v, _ = self.lengths
        return (0, t, t + v)

    @property
    def total(self) -> int:
        return sum(self.lengths)

    def length(self, m) -> int:
        return self.lengths[modality_index(m)]

    def span(self, m) -> slice:
        k = modality_index(m)
        start = self.offsets[k]
        return slice(start, start + self.lengths[k])

    def last_rows(self) -> list[int]:
        return [self.offsets[k] + self.lengths[k] - 1 for k in range(3)]

    def __str__(self) -> str:
        return ",".join(str(n) for n in self.lengths)


@dataclass(frozen=True)
class BlockPattern:
    allow: frozenset  # of (row modality, column modality) index pairs
    name: str = ""

    def __post_init__(self):
        cells = frozenset((modality_index(i), modality_index(j)) for i, j in self.allow)
        if not cells:
            raise ValueError("a block pattern needs at least one Allow cell")
        object.__setattr__(self, "allow", cells)

    @classmethod
    def from_pairs(cls, pairs: str, name: str = "") -> "BlockPattern":
        """Build from space separated two-letter pairs, e.g. ``"tv va at"``."""
        return cls(frozenset((p[0], p[1]) for p in pairs.split()), name)

    def allows(self, i, j) -> bool:
        return (modality_index(i), modality_index(j)) in self.allow

    def row_group(self, i) -> list[int]:
        """Allowed column modalities for row modality ``i``, in t, v, a order."""
        i = modality_index(i)
        return [j for j in range(3) if (i, j) in self.allow]

    def grid(self) -> np.ndarray:
        g = np.zeros((3, 3), dtype=bool)
        for i, j in self.allow:
            g[i, j] = True
        return g

    def pairs(self) -> list[str]:
        return [MODALITIES[i] + MODALITIES[j] for i, j in sorted(self.allow)]

    @property
    def is_all_allow(self) -> bool:
        return len(self.allow) == 9


class StructureName(enum.Enum):
    ORIGINAL = "original"
    STRUCTURE1 = "s1"
    STRUCTURE2 = "s2"
    STRUCTURE3 = "s3"
    SELF_ONLY = "self_only"
    IEM = "iem"

    @classmethod
    def parse(cls, text: str) -> "StructureName":
        key = text.strip().lower().replace("-", "_")
        aliases = {
            "structure1": "s1",
            "structure2": "s2",
            "structure3": "s3",
            "selfonly": "self_only",
            "self": "self_only",
        }
        return cls(aliases.get(key, key))


# (forward, backward) Allow cells per fusion structure.
_PATTERNS = {
    StructureName.ORIGINAL: ("tv va at", "ta vt av"),
    StructureName.STRUCTURE1: ("ta va at", "tv vt at"),
    StructureName.STRUCTURE2: ("tv vt av", "ta va at"),
    StructureName.STRUCTURE3: ("tv va av", "ta vt at"),
}
_SELF_ONLY = "tv ta vt va at av"
_IEM = "tt vv aa"
ALL_ALLOW = BlockPattern.from_pairs("tt tv ta vt vv va at av aa", "all")


def pattern_of(name: StructureName | str):
    """(forward, backward) pair for fusion structures, a single pattern for
    ``SELF_ONLY`` and ``IEM``."""
    if isinstance(name, str):
        name = StructureName.parse(name)
    if name is StructureName.IEM:
        return BlockPattern.from_pairs(_IEM, "iem")
    if name is StructureName.SELF_ONLY:
        return BlockPattern.from_pairs(_SELF_ONLY, "self_only")
    fwd, bwd = _PATTERNS[name]
    return (
        BlockPattern.from_pairs(fwd, f"{name.value}-forward"),
        BlockPattern.from_pairs(bwd, f"{name.value}-backward"),
    )


def stream_patterns(name: StructureName | str) -> tuple[BlockPattern, BlockPattern]:
    """Stage-1 (forward, backward) patterns; Self-Only drives both streams."""
    p = pattern_of(name)
    if isinstance(p, BlockPattern):
        if p.name == "iem":
            raise ValueError("IEM is the intra-enhancement mask, not a fusion structure")
        return p, p
    return p


def materialize(pattern: BlockPattern, layout: SegmentLayout) -> Tensor2:
    """Dense ``T_m x T_m`` additive mask: 0 on Allow blocks, -inf elsewhere."""
    n = layout.total
    m = np.full((n, n), -np.inf)
    for i, j in pattern.allow:
        m[layout.span(i), layout.span(j)] = 0.0
    return Tensor2(m)


@dataclass(frozen=True)
class PatternCheck:
    fusion_safe: bool
    disorder_rows: tuple[str, ...] = ()


def validate(pattern: BlockPattern) -> PatternCheck:
    bad = tuple(MODALITIES[i] for i in range(3) if len(pattern.row_group(i)) != 1)
    return PatternCheck(not bad, bad)


def render_ascii(pattern: BlockPattern) -> str:
    lines = ["   " + "  ".join(MODALITIES)]
    g = pattern.grid()
    for i, m in enumerate(MODALITIES):
        lines.append(f"{m}  " + "  ".join("A" if g[i, j] else "." for j in range(3)))
    return "\n".join(lines)


def render_csv(mask: Tensor2) -> str:
    rows = []
    for row in mask.data:
        rows.append(",".join("-inf" if np.isneginf(x) else "0" for x in row))
    return "\n".join(rows)
