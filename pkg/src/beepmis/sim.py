"""Synchronous round execution, fault injection and stabilization detection."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ProtocolError
from .graph import Graph
from .protocol import (
    InitMode,
    LevelState,
    ProtocolConfig,
    Variant,
    assign_lmax,
    initial_levels,
    level_range,
    parse_enum,
)


def variant_code(variant) -> int:
    return kernels.V1 if Variant.parse(variant) is Variant.V1 else kernels.V2


@dataclass(frozen=True, eq=False)
class RoundEvents:
    round_index: int
    beeped_ch1: np.ndarray
    heard_ch1: np.ndarray
    beeped_ch2: np.ndarray
    heard_ch2: np.ndarray


class FaultMode(str, enum.Enum):
    UNIFORM_RANDOM_LEVEL = "UNIFORM_RANDOM_LEVEL"
    SET_LEVEL = "SET_LEVEL"


@dataclass(frozen=True)
class FaultSpec:
    """A transient fault firing at the start of ``round``.

    Targets are either an explicit vertex list or a fraction of all vertices
    (``ceil(fraction * n)`` of them, chosen by keyed hashing).
    """

    round: int
    targets: tuple | None = None
    fraction: float | None = None
    mode: FaultMode = FaultMode.UNIFORM_RANDOM_LEVEL
    level: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", parse_enum(FaultMode, self.mode, "fault mode"))
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(int(v) for v in self.targets))
        if self.round < 1:
            raise ConfigError("CONFIG_INVALID", f"fault round must be >= 1, got {self.round}")
        if (self.targets is None) == (self.fraction is None):
            raise ConfigError("CONFIG_INVALID", "fault needs exactly one of targets / fraction")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ConfigError("CONFIG_INVALID", f"fault fraction must be in (0, 1], got {self.fraction}")
        if self.mode is FaultMode.SET_LEVEL and self.level is None:
            raise ConfigError("CONFIG_INVALID", "SET_LEVEL fault needs a level")

    def to_dict(self):
        d = {"round": self.round, "mode": self.mode.value}
        if self.targets is not None:
            d["targets"] = list(self.targets)
        else:
            d["fraction"] = self.fraction
        if self.level is not None:
            d["level"] = self.level
        return d


def fault_targets(spec: FaultSpec, n: int, seed) -> np.ndarray:
    if spec.targets is not None:
        t = np.array(spec.targets, dtype=np.int64)
        if t.size and (t.min() < 0 or t.max() >= n):
            raise ProtocolError("TARGET_OUT_OF_RANGE", f"fault target outside 0..{n - 1}")
        return np.unique(t)
    k = min(n, math.ceil(spec.fraction * n - 1e-9))
    h = kernels.vertex_hashes(seed, kernels.STREAM_FAULT_SELECT, spec.round, n)
    return np.sort(np.argsort(h, kind="stable")[:k])


def inject_fault(state: LevelState, spec: FaultSpec, variant, seed) -> LevelState:
    n = state.levels.shape[0]
    targets = fault_targets(spec, n, seed)
    out = state.copy()
    if targets.size == 0:
        return out
    lo, hi = level_range(state.lmax, variant)
    lo, hi = lo[targets], hi[targets]
    if spec.mode is FaultMode.SET_LEVEL:
        out.levels[targets] = np.clip(spec.level, lo, hi)
    else:
        h = kernels.vertex_hashes(seed, kernels.STREAM_FAULT_LEVEL, spec.round, n)[targets]
        span = (hi - lo + 1).astype(np.uint64)
        out.levels[targets] = lo + (h % span).astype(np.int64)
    return out


def default_max_rounds(n: int, lmax) -> int:
    return int(200 * (math.log2(max(n, 1)) + 1)) + 10 * int(np.max(lmax))


def run_round(g: Graph, state: LevelState, variant, seed, round_index):
    """Execute round ``round_index``; returns ``(next_state, events)``."""
    new, b1, h1, b2, h2 = kernels.step(
        g.indptr, g.indices, state.levels, state.lmax, variant_code(variant), seed, round_index
    )
    return LevelState(new, state.lmax), RoundEvents(round_index, b1, h1, b2, h2)


@dataclass
class RunResult:
    stabilization_round: int | None
    rounds_executed: int
    stabilized: bool
    mis_set: frozenset
    seed: int
    fault_rounds: list
    final_state: LevelState
    variant: Variant
    verified: bool = False
    max_rounds: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def last_fault_round(self):
        return self.fault_rounds[-1] if self.fault_rounds else None

    @property
    def rounds(self):
        """Rounds executed before the stable configuration was reached."""
        return self.stabilization_round - 1 if self.stabilized else None

    @property
    def rounds_after_last_fault(self):
        if not self.stabilized:
            return None
        start = self.last_fault_round or 1
        return self.stabilization_round - start

    def to_dict(self):
        return {
            "stabilized": self.stabilized,
            "verified": self.verified,
            "stabilization_round": self.stabilization_round,
            "rounds": self.rounds,
            "rounds_executed": self.rounds_executed,
            "rounds_after_last_fault": self.rounds_after_last_fault,
            "max_rounds": self.max_rounds,
            "seed": self.seed,
            "variant": self.variant.name,
            "fault_rounds": list(self.fault_rounds),
            "mis": sorted(self.mis_set),
            "final_levels": self.final_state.levels.tolist(),
            "lmax": self.final_state.lmax.tolist(),
            "diagnostics": self.diagnostics,
        }


def run_until_stable(
    g: Graph,
    config: ProtocolConfig,
    init=InitMode.UNIFORM_RANDOM,
    seed=0,
    max_rounds=None,
    faults=(),
    *,
    explicit_levels=None,
    recorder=None,
) -> RunResult:
    """Run rounds ``t = 1, 2, ...`` until every vertex is stable.

    Faults fire at the start of their round, before the stability check; a
    run never stops while a fault is still pending. ``recorder`` (see
    :class:`beepmis.trace.Trace`) receives the state at the start of every
    round and that round's events.
    """
    if not isinstance(config, ProtocolConfig):
        raise ConfigError("CONFIG_INVALID", "config must be a ProtocolConfig")
    variant = config.variant
    code = variant_code(variant)
    lmax = assign_lmax(g, config.policy)
    state = initial_levels(g, lmax, init, seed, variant, explicit=explicit_levels)
    state.validate(variant)
    if max_rounds is None:
        max_rounds = default_max_rounds(g.n, lmax)
    if max_rounds < 1:
        raise ConfigError("CONFIG_INVALID", f"max_rounds must be >= 1, got {max_rounds}")

    schedule = {}
    for f in faults:
        schedule.setdefault(f.round, []).append(f)
    last_scheduled = max(schedule, default=0)
    fired = []
    if recorder is not None:
        recorder.start(g, config, lmax, seed, list(faults))

    t = 1
    stabilized = False
    while True:
        for f in schedule.get(t, ()):
            state = inject_fault(state, f, variant, seed)
            if not fired or fired[-1] != t:
                fired.append(t)
        mis, stable = kernels.stable_masks(g.indptr, g.indices, state.levels, lmax, code)
        if t > last_scheduled and stable.all():
            stabilized = True
            break
        if t > max_rounds:
            break
        new, b1, h1, b2, h2 = kernels.step(g.indptr, g.indices, state.levels, lmax, code, seed, t)
        if recorder is not None:
            recorder.record(t, state.levels, mis, stable, RoundEvents(t, b1, h1, b2, h2))
        state = LevelState(new, lmax)
        t += 1
    if recorder is not None:
        recorder.record(t, state.levels, mis, stable, None)

    mis_set = frozenset(np.flatnonzero(mis).tolist()) if stabilized else frozenset()
    result = RunResult(
        stabilization_round=t if stabilized else None,
        rounds_executed=t - 1,
        stabilized=stabilized,
        mis_set=mis_set,
        seed=seed,
        fault_rounds=fired,
        final_state=state,
        variant=variant,
        max_rounds=max_rounds,
    )
    if stabilized:
        from .verifier import is_valid_mis

        result.verified = bool(is_valid_mis(g, mis_set))
    if recorder is not None:
        recorder.finish(result)
    return result
