"""Per-vertex state machines of the single- and two-channel level protocols.

Nothing here takes a vertex id: a vertex's behaviour depends only on its
level, its cap and what it heard.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ProtocolError
from .graph import Graph, max_degree, two_hop_max_degrees

# beep draws compare against the top bits of a 64-bit hash
MAX_SUPPORTED_LMAX = 63


def parse_enum(cls, value, what="value"):
    """Accept an enum member, its value or its name (case-insensitive)."""
    if isinstance(value, cls):
        return value
    text = str(value).strip().upper()
    for member in cls:
        if text in (member.value, member.name):
            return member
    raise ConfigError("CONFIG_INVALID", f"unknown {what} {value!r}")


class Variant(str, enum.Enum):
    V1 = "V1_SINGLE_CHANNEL"
    V2 = "V2_TWO_CHANNEL"

    @classmethod
    def parse(cls, value):
        return parse_enum(cls, value, "variant")


class PolicyKind(str, enum.Enum):
    GLOBAL_MAX_DEGREE = "GLOBAL_MAX_DEGREE"
    LOCAL_DEGREE = "LOCAL_DEGREE"
    TWO_HOP_DEGREE = "TWO_HOP_DEGREE"
    EXPLICIT = "EXPLICIT"


MIN_C1 = {
    PolicyKind.GLOBAL_MAX_DEGREE: 15,
    PolicyKind.LOCAL_DEGREE: 30,
    PolicyKind.TWO_HOP_DEGREE: 15,
}


class InitMode(str, enum.Enum):
    UNIFORM_RANDOM = "UNIFORM_RANDOM"
    ALL_MAX = "ALL_MAX"
    ALL_MIN = "ALL_MIN"
    ALL_ONE = "ALL_ONE"
    EXPLICIT = "EXPLICIT"


@dataclass(frozen=True)
class LmaxPolicy:
    kind: PolicyKind
    c1: int = 15
    explicit_values: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_enum(PolicyKind, self.kind, "lmax policy"))
        if self.explicit_values is not None:
            object.__setattr__(self, "explicit_values", tuple(int(x) for x in self.explicit_values))
        minimum = MIN_C1.get(self.kind)
        if minimum is not None and self.c1 < minimum:
            raise ProtocolError(
                "C1_TOO_SMALL", f"{self.kind.value} requires c1 >= {minimum}, got {self.c1}"
            )
        if self.kind is PolicyKind.EXPLICIT and self.explicit_values is None:
            raise ConfigError("CONFIG_INVALID", "EXPLICIT policy needs explicit_values")


@dataclass(frozen=True)
class ProtocolConfig:
    variant: Variant = Variant.V1
    policy: LmaxPolicy = field(default_factory=lambda: LmaxPolicy(PolicyKind.GLOBAL_MAX_DEGREE))

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.policy.kind is PolicyKind.TWO_HOP_DEGREE and self.variant is not Variant.V2:
            raise ConfigError("CONFIG_INVALID", "TWO_HOP_DEGREE policy is defined for V2 only")


@dataclass
class LevelState:
    """Levels and caps of every vertex; ``levels`` is the only mutable part."""

    levels: np.ndarray
    lmax: np.ndarray

    def __post_init__(self):
        self.levels = np.ascontiguousarray(self.levels, dtype=np.int64)
        self.lmax = np.ascontiguousarray(self.lmax, dtype=np.int64)
        if self.levels.shape != self.lmax.shape:
            raise ProtocolError("LEVEL_OUT_OF_RANGE", "levels and lmax differ in length")

    def copy(self):
        return LevelState(self.levels.copy(), self.lmax)

    def validate(self, variant):
        if np.any(self.lmax < 1):
            raise ProtocolError("LEVEL_OUT_OF_RANGE", "lmax must be >= 1")
        lo = -self.lmax if Variant.parse(variant) is Variant.V1 else 0
        bad = np.flatnonzero((self.levels < lo) | (self.levels > self.lmax))
        if bad.size:
            v = int(bad[0])
            raise ProtocolError(
                "LEVEL_OUT_OF_RANGE", f"vertex {v}: level {self.levels[v]} outside range"
            )


@dataclass(frozen=True)
class VertexRoundInput:
    beeped_ch1: bool = False
    heard_ch1: bool = False
    beeped_ch2: bool = False
    heard_ch2: bool = False


def ceil_log2(x: int) -> int:
    """``ceil(log2(max(x, 1)))``."""
    return (max(int(x), 1) - 1).bit_length()


def assign_lmax(g: Graph, policy: LmaxPolicy) -> np.ndarray:
    kind = policy.kind
    if kind is PolicyKind.GLOBAL_MAX_DEGREE:
        out = np.full(g.n, ceil_log2(max_degree(g)) + policy.c1, dtype=np.int64)
    elif kind is PolicyKind.LOCAL_DEGREE:
        out = np.array([2 * ceil_log2(d) + policy.c1 for d in g.degrees], dtype=np.int64)
    elif kind is PolicyKind.TWO_HOP_DEGREE:
        out = np.array([2 * ceil_log2(d) + policy.c1 for d in two_hop_max_degrees(g)], dtype=np.int64)
    else:
        vals = policy.explicit_values
        if len(vals) != g.n:
            raise ProtocolError(
                "EXPLICIT_LENGTH_MISMATCH", f"{len(vals)} values for {g.n} vertices"
            )
        out = np.array(vals, dtype=np.int64)
        if np.any(out < 1):
            raise ProtocolError("LEVEL_OUT_OF_RANGE", "explicit lmax values must be >= 1")
    if out.size and out.max() > MAX_SUPPORTED_LMAX:
        raise ConfigError(
            "CONFIG_INVALID", f"lmax {out.max()} exceeds supported maximum {MAX_SUPPORTED_LMAX}"
        )
    return out


def _check_range(level, lmax, variant):
    lo = -lmax if variant is Variant.V1 else 0
    if lmax < 1 or not lo <= level <= lmax:
        raise ProtocolError("LEVEL_OUT_OF_RANGE", f"level {level} outside [{lo}, {lmax}]")


def beep_probability(level: int, lmax: int, variant=Variant.V1) -> Fraction:
    """Channel-1 beep probability; exact, since it is always a power of two."""
    variant = Variant.parse(variant)
    _check_range(level, lmax, variant)
    if level == lmax:
        return Fraction(0)
    if level <= 0:
        # V2 at level 0 emits on channel 2 instead
        return Fraction(1) if variant is Variant.V1 else Fraction(0)
    return Fraction(1, 2**level)


def update_level_v1(level: int, lmax: int, inp: VertexRoundInput) -> int:
    _check_range(level, lmax, Variant.V1)
    if inp.heard_ch1:
        return min(level + 1, lmax)
    if inp.beeped_ch1:
        return -lmax
    return max(level - 1, 1)


def update_level_v2(level: int, lmax: int, inp: VertexRoundInput) -> int:
    _check_range(level, lmax, Variant.V2)
    if inp.beeped_ch2 != (level == 0):
        raise ProtocolError("CH2_CONSISTENCY", f"beeped_ch2={inp.beeped_ch2} at level {level}")
    if inp.heard_ch2:
        return lmax
    if inp.heard_ch1:
        return min(level + 1, lmax)
    if inp.beeped_ch1:
        return 0
    if not inp.beeped_ch2:
        return max(level - 1, 1)
    return level


def level_range(lmax: np.ndarray, variant):
    lmax = np.asarray(lmax, dtype=np.int64)
    lo = -lmax if Variant.parse(variant) is Variant.V1 else np.zeros_like(lmax)
    return lo, lmax


def initial_levels(g: Graph, lmax, mode, seed=0, variant=Variant.V1, explicit=None) -> LevelState:
    variant = Variant.parse(variant)
    mode = parse_enum(InitMode, mode, "init mode")
    lmax = np.asarray(lmax, dtype=np.int64)
    lo, hi = level_range(lmax, variant)
    if mode is InitMode.UNIFORM_RANDOM:
        levels = np.random.default_rng(seed).integers(lo, hi + 1)
    elif mode is InitMode.ALL_MAX:
        levels = hi.copy()
    elif mode is InitMode.ALL_MIN:
        levels = lo.copy()
    elif mode is InitMode.ALL_ONE:
        levels = np.minimum(np.ones(g.n, dtype=np.int64), hi)
    else:
        if explicit is None or len(explicit) != g.n:
            raise ProtocolError("EXPLICIT_OUT_OF_RANGE", "explicit levels must cover every vertex")
        levels = np.asarray(explicit, dtype=np.int64)
        if np.any((levels < lo) | (levels > hi)):
            raise ProtocolError("EXPLICIT_OUT_OF_RANGE", "explicit level outside variant range")
    return LevelState(levels, lmax)
