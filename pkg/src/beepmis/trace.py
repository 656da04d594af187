"""Per-round run traces, kept in memory and serialized as JSON lines.

A trace file holds one ``header`` record (graph, protocol, caps, seed,
faults), one ``round`` record per round start and a closing ``result``
record. Levels and beep/hear events are optional per record.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import TraceError
from .graph import build_graph
from .protocol import LmaxPolicy, ProtocolConfig, Variant
from .sim import FaultSpec, RoundEvents

FORMAT = "beepmis-trace/1"


class Trace:
    """Recorder for :func:`beepmis.sim.run_until_stable`.

    Round ``t`` maps to the state at the *start* of round ``t`` (after any
    fault firing at ``t``) and, except for the last round, the events of
    round ``t``.
    """

    def __init__(self, keep_levels=True, keep_events=True):
        self.keep_levels = keep_levels
        self.keep_events = keep_events
        self.graph = None
        self.config = None
        self.lmax = None
        self.seed = None
        self.faults = []
        self.levels = []
        self.events = []
        self.mis_counts = []
        self.stable = []
        self.result = None
        self.final_round = 0

    # recorder protocol
    def start(self, g, config, lmax, seed, faults):
        self.graph, self.config, self.lmax, self.seed = g, config, lmax, seed
        self.faults = list(faults)

    def record(self, t, levels, mis, stable, events):
        self.final_round = t
        if self.keep_levels:
            self.levels.append(np.array(levels, copy=True))
        if self.keep_events:
            self.events.append(events)
        self.mis_counts.append(int(mis.sum()))
        self.stable.append(np.array(stable, copy=True))

    def finish(self, result):
        self.result = result

    # queries
    @property
    def variant(self):
        return self.config.variant

    @property
    def fault_rounds(self):
        return list(self.result.fault_rounds) if self.result is not None else sorted({f.round for f in self.faults})

    @property
    def has_levels(self):
        return bool(self.levels)

    @property
    def has_events(self):
        return any(e is not None for e in self.events)

    def levels_at(self, t):
        if not self.levels or not 1 <= t <= len(self.levels):
            raise TraceError("TRACE_WINDOW_MISSING", f"no levels recorded for round {t}")
        return self.levels[t - 1]

    def events_at(self, t):
        if not 1 <= t <= len(self.events) or self.events[t - 1] is None:
            raise TraceError("TRACE_WINDOW_MISSING", f"no round events recorded for round {t}")
        return self.events[t - 1]

    def stable_at(self, t):
        return self.stable[t - 1]

    def window_start(self, t):
        """First round of the fault-free window containing round ``t``."""
        return max([r for r in self.fault_rounds if r <= t], default=1)

    def level_matrix(self):
        if not self.levels:
            raise TraceError("TRACE_WINDOW_MISSING", "trace has no recorded levels")
        return np.vstack(self.levels)

    def stable_matrix(self):
        return np.vstack(self.stable)


def _ids(mask):
    return np.flatnonzero(mask).tolist()


def _mask(ids, n):
    m = np.zeros(n, dtype=bool)
    m[np.asarray(ids, dtype=np.int64)] = True
    return m


def write_jsonl(trace: Trace, path, *, levels=True, events=True, diagnostics=False):
    g, cfg = trace.graph, trace.config
    if diagnostics and cfg.variant is Variant.V1 and not trace.has_levels:
        raise TraceError("TRACE_WINDOW_MISSING", "diagnostics need recorded levels")
    header = {
        "type": "header",
        "format": FORMAT,
        "n": g.n,
        "edges": [list(e) for e in g.edges()],
        "variant": cfg.variant.name,
        "policy": cfg.policy.kind.value,
        "c1": cfg.policy.c1,
        "lmax": np.asarray(trace.lmax).tolist(),
        "seed": trace.seed,
        "faults": [f.to_dict() for f in trace.faults],
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for t in range(1, trace.final_round + 1):
            rec = {"type": "round", "round": t}
            ev = trace.events[t - 1] if t - 1 < len(trace.events) else None
            if ev is not None:
                rec["beeps_ch1"] = int(ev.beeped_ch1.sum())
                rec["beeps_ch2"] = int(ev.beeped_ch2.sum())
            rec["mis_size"] = trace.mis_counts[t - 1]
            rec["stable_size"] = int(trace.stable[t - 1].sum())
            if diagnostics and cfg.variant is Variant.V1:
                from .diagnostics import classify_levels

                diag = classify_levels(g, trace.levels_at(t), trace.lmax, trace.stable_at(t))
                rec["diagnostics"] = diag.counters()
            if levels and trace.has_levels:
                rec["levels"] = trace.levels_at(t).tolist()
            if events and ev is not None:
                rec["events"] = {
                    "beeped_ch1": _ids(ev.beeped_ch1),
                    "heard_ch1": _ids(ev.heard_ch1),
                    "beeped_ch2": _ids(ev.beeped_ch2),
                    "heard_ch2": _ids(ev.heard_ch2),
                }
            fh.write(json.dumps(rec) + "\n")
        if trace.result is not None:
            fh.write(json.dumps({"type": "result", **trace.result.to_dict()}) + "\n")


def read_jsonl(path):
    """Rebuild a :class:`Trace` and the raw ``result`` record from a file."""
    try:
        records = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise TraceError("PARSE", str(exc)) from None
    if not records or records[0].get("type") != "header" or records[0].get("format") != FORMAT:
        raise TraceError("PARSE", f"{path}: not a {FORMAT} file")
    head = records[0]
    try:
        g = build_graph(head["n"], head["edges"])
        lmax = np.array(head["lmax"], dtype=np.int64)
        policy = LmaxPolicy("EXPLICIT", head.get("c1", 15), tuple(lmax.tolist()))
        config = ProtocolConfig(Variant.parse(head["variant"]), policy)
        faults = [FaultSpec(**f) for f in head.get("faults", [])]
    except (KeyError, TypeError) as exc:
        raise TraceError("PARSE", f"bad header: {exc}") from None
    rounds = [r for r in records[1:] if r.get("type") == "round"]
    tail = [r for r in records[1:] if r.get("type") == "result"]
    has_levels = bool(rounds) and all("levels" in r for r in rounds)
    trace = Trace(keep_levels=has_levels, keep_events=True)
    trace.start(g, config, lmax, head.get("seed"), faults)
    n = g.n
    for i, r in enumerate(rounds, start=1):
        if r.get("round") != i:
            raise TraceError("PARSE", f"round records out of order at {i}")
        ev = None
        if "events" in r:
            e = r["events"]
            ev = RoundEvents(
                i,
                _mask(e["beeped_ch1"], n),
                _mask(e["heard_ch1"], n),
                _mask(e.get("beeped_ch2", []), n),
                _mask(e.get("heard_ch2", []), n),
            )
        trace.final_round = i
        if has_levels:
            trace.levels.append(np.array(r["levels"], dtype=np.int64))
        trace.events.append(ev)
        trace.mis_counts.append(r.get("mis_size", 0))
        trace.stable.append(np.zeros(n, dtype=bool))
    if has_levels:
        from .verifier import stable_sets_mask

        code = config.variant
        trace.stable = [stable_sets_mask(g, lv, lmax, code)[1] for lv in trace.levels]
    result = tail[0] if tail else None
    if result is not None:
        trace.result = _ResultView(result)
    return trace, result


class _ResultView:
    """Minimal stand-in for a RunResult read back from disk."""

    def __init__(self, rec):
        self.fault_rounds = list(rec.get("fault_rounds", []))
        self.stabilized = rec.get("stabilized")
        self.record = rec
