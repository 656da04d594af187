"""Experiment plumbing: configs, single runs, sweeps, CSV output, file verification."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import BeepMISError, ConfigError, TraceError
from .graph import Family, Graph, GraphFamilySpec, build_graph, generate, read_edge_list
from .protocol import InitMode, LevelState, LmaxPolicy, ProtocolConfig, Variant, parse_enum
from .sim import FaultSpec, run_until_stable
from .trace import Trace, read_jsonl, write_jsonl
from .verifier import check_closure, is_valid_mis, stable_sets

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

JOBS_ENV = "BEEPMIS_JOBS"
DEFAULT_AVG_DEGREE = 8.0
RESULT_FORMAT = "beepmis-result/1"
RUN_COLUMNS = [
    "run_id", "seed", "family", "n", "m", "variant", "policy", "c1",
    "rounds", "stabilized", "rounds_after_last_fault",
]
SUMMARY_COLUMNS = [
    "family", "n", "m", "variant", "policy", "c1", "runs", "stabilized_count",
    "rounds_min", "rounds_median", "rounds_p95", "rounds_max",
    "rounds_per_log2n_median", "wall_time_s",
]


def default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        raise ConfigError("CONFIG_INVALID", f"{JOBS_ENV} must be an integer") from None


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("CONFIG_INVALID", f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("CONFIG_INVALID", f"{path}: {exc}") from None


def merge(base: dict, overrides: dict) -> dict:
    """Recursive merge; ``None`` values in ``overrides`` leave ``base`` untouched."""
    out = dict(base)
    for key, val in overrides.items():
        if val is None:
            continue
        if isinstance(val, dict):
            out[key] = merge(out.get(key) if isinstance(out.get(key), dict) else {}, val)
        else:
            out[key] = val
    return out


def family_spec(family, n, seed=0, p=None, avg_degree=None, k=8) -> GraphFamilySpec:
    family = parse_enum(Family, family, "family") if not isinstance(family, Family) else family
    if family is Family.GNP and p is None:
        avg_degree = DEFAULT_AVG_DEGREE if avg_degree is None else avg_degree
        p = min(1.0, avg_degree / n) if n > 1 else 0.0
    return GraphFamilySpec(family, int(n), p, int(seed), int(k))


_SEEDED = {Family.GNP, Family.RANDOM_TREE}


@lru_cache(maxsize=64)
def _cached_graph(spec: GraphFamilySpec) -> Graph:
    return generate(spec)


def graph_for(family, n, seed, p=None, avg_degree=None, k=8) -> Graph:
    spec = family_spec(family, n, seed, p, avg_degree, k)
    if spec.family not in _SEEDED:
        spec = GraphFamilySpec(spec.family, spec.n, spec.p, 0, spec.k)
    return _cached_graph(spec)


def parse_protocol(section: dict) -> ProtocolConfig:
    variant = Variant.parse(section.get("variant", "V1"))
    default_policy = "TWO_HOP_DEGREE" if variant is Variant.V2 else "GLOBAL_MAX_DEGREE"
    policy = LmaxPolicy(
        section.get("policy", default_policy),
        int(section.get("c1", 15)),
        section.get("lmax_values"),
    )
    return ProtocolConfig(variant, policy)


def parse_faults(items) -> list:
    try:
        return [FaultSpec(**dict(f)) for f in items or []]
    except TypeError as exc:
        raise ConfigError("CONFIG_INVALID", f"bad fault entry: {exc}") from None


@dataclass
class ExperimentConfig:
    graph: Graph
    family: str
    protocol: ProtocolConfig
    init: InitMode = InitMode.UNIFORM_RANDOM
    seed: int = 0
    max_rounds: int | None = None
    faults: list = field(default_factory=list)
    trace_path: str | None = None
    trace_levels: bool = True
    trace_events: bool = True
    trace_diagnostics: bool = False
    result_path: str | None = None

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        gsec = cfg.get("graph", {})
        rsec = cfg.get("run", {})
        tsec = cfg.get("trace", {})
        osec = cfg.get("output", {})
        if gsec.get("file"):
            path = Path(gsec["file"])
            if not path.exists():
                raise ConfigError("CONFIG_INVALID", f"graph file {path} does not exist")
            g, family = read_edge_list(path), "FILE"
        else:
            if "family" not in gsec or "n" not in gsec:
                raise ConfigError("CONFIG_INVALID", "graph section needs family and n (or file)")
            g = generate(family_spec(gsec["family"], gsec["n"], gsec.get("seed", 0), gsec.get("p"),
                                     gsec.get("avg_degree"), gsec.get("k", 8)))
            family = parse_enum(Family, gsec["family"], "family").value
        max_rounds = rsec.get("max_rounds")
        return cls(
            graph=g,
            family=family,
            protocol=parse_protocol(cfg.get("protocol", {})),
            init=parse_enum(InitMode, rsec.get("init", "UNIFORM_RANDOM"), "init mode"),
            seed=int(rsec.get("seed", 0)),
            max_rounds=int(max_rounds) if max_rounds else None,
            faults=parse_faults(cfg.get("faults")),
            trace_path=tsec.get("path"),
            trace_levels=bool(tsec.get("levels", True)),
            trace_events=bool(tsec.get("events", True)),
            trace_diagnostics=bool(tsec.get("diagnostics", False)),
            result_path=osec.get("result"),
        )


def result_record(g: Graph, protocol: ProtocolConfig, result) -> dict:
    return {
        "format": RESULT_FORMAT,
        "n": g.n,
        "edges": [list(e) for e in g.edges()],
        "policy": protocol.policy.kind.value,
        "c1": protocol.policy.c1,
        **result.to_dict(),
    }


def execute(cfg: ExperimentConfig):
    """Single run per ``cfg``; writes the trace and result files it names."""
    trace = None
    if cfg.trace_path:
        trace = Trace(keep_levels=cfg.trace_levels or cfg.trace_diagnostics, keep_events=cfg.trace_events)
    result = run_until_stable(cfg.graph, cfg.protocol, cfg.init, cfg.seed, cfg.max_rounds,
                              cfg.faults, recorder=trace)
    if trace is not None:
        write_jsonl(trace, cfg.trace_path, levels=cfg.trace_levels, events=cfg.trace_events,
                    diagnostics=cfg.trace_diagnostics)
    if cfg.result_path:
        Path(cfg.result_path).write_text(json.dumps(result_record(cfg.graph, cfg.protocol, result)) + "\n")
    return result


# sweeps


@dataclass(frozen=True)
class RunTask:
    family: str
    n: int
    variant: str
    policy: str
    c1: int
    seed: int
    init: str = "UNIFORM_RANDOM"
    p: float | None = None
    avg_degree: float | None = None
    k: int = 8
    max_rounds: int | None = None
    faults: tuple = ()

    def sort_key(self, config_order):
        return (self.family, self.n, config_order[(self.variant, self.policy, self.c1)], self.seed)


def run_task(task: RunTask) -> dict:
    start = time.perf_counter()
    row = {"seed": task.seed, "family": task.family, "n": task.n, "m": "",
           "variant": task.variant, "policy": task.policy, "c1": task.c1,
           "rounds": "", "stabilized": "", "rounds_after_last_fault": ""}
    try:
        g = graph_for(task.family, task.n, task.seed, task.p, task.avg_degree, task.k)
        row["m"] = g.m
        protocol = ProtocolConfig(Variant.parse(task.variant), LmaxPolicy(task.policy, task.c1))
        faults = [FaultSpec(**f) for f in task.faults]
        res = run_until_stable(g, protocol, task.init, task.seed, task.max_rounds, faults)
        ok = res.stabilized and bool(is_valid_mis(g, res.mis_set))
        row["stabilized"] = "true" if ok else "false"
        if ok:
            row["rounds"] = res.rounds
            row["rounds_after_last_fault"] = res.rounds_after_last_fault
    except BeepMISError as exc:
        row["stabilized"] = f"ERROR:{exc.code}"
    row["_wall"] = time.perf_counter() - start
    return row


def build_tasks(sweep: dict, graph_defaults: dict | None = None) -> list:
    graph_defaults = graph_defaults or {}
    families = sweep.get("families") or []
    sizes = sweep.get("sizes") or []
    configs = sweep.get("configs") or []
    seeds = int(sweep.get("seeds", 0))
    if not families or not sizes or not configs or seeds < 1:
        raise ConfigError("CONFIG_INVALID", "sweep matrix is empty")
    base = int(sweep.get("base_seed", 0))
    faults = tuple(f.to_dict() for f in parse_faults(sweep.get("faults")))
    tasks = []
    for fam in families:
        fam = parse_enum(Family, fam, "family").value
        for n in sizes:
            for c in configs:
                protocol = parse_protocol(c)
                for s in range(seeds):
                    tasks.append(RunTask(
                        fam, int(n), protocol.variant.name, protocol.policy.kind.value,
                        protocol.policy.c1, base + s, str(sweep.get("init", "UNIFORM_RANDOM")),
                        graph_defaults.get("p"), graph_defaults.get("avg_degree", DEFAULT_AVG_DEGREE),
                        int(graph_defaults.get("k", 8)), sweep.get("max_rounds"), faults,
                    ))
    return tasks


def run_sweep(tasks, jobs=1):
    """Run every task; rows come back sorted by (family, n, config, seed)."""
    if not tasks:
        raise ConfigError("CONFIG_INVALID", "sweep matrix is empty")
    order = {}
    for t in tasks:
        order.setdefault((t.variant, t.policy, t.c1), len(order))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    else:
        rows = [run_task(t) for t in tasks]
    paired = sorted(zip(tasks, rows), key=lambda tr: tr[0].sort_key(order))
    out = []
    for i, (_, row) in enumerate(paired):
        row["run_id"] = i
        out.append(row)
    return out


def runs_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RUN_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _p95(values):
    s = sorted(values)
    return s[min(len(s) - 1, math.ceil(0.95 * len(s)) - 1)]


def summarize(rows) -> list:
    groups = {}
    for r in rows:
        key = (r["family"], r["n"], r["variant"], r["policy"], r["c1"])
        groups.setdefault(key, []).append(r)
    out = []
    for (fam, n, variant, policy, c1), rs in groups.items():
        rounds = [int(r["rounds"]) for r in rs if r["stabilized"] == "true"]
        ms = [int(r["m"]) for r in rs if r["m"] != ""]
        med = statistics.median(rounds) if rounds else ""
        out.append({
            "family": fam, "n": n, "m": round(statistics.mean(ms), 2) if ms else "",
            "variant": variant, "policy": policy, "c1": c1, "runs": len(rs),
            "stabilized_count": len(rounds),
            "rounds_min": min(rounds) if rounds else "",
            "rounds_median": med,
            "rounds_p95": _p95(rounds) if rounds else "",
            "rounds_max": max(rounds) if rounds else "",
            "rounds_per_log2n_median": round(med / math.log2(n), 4) if rounds and n > 1 else "",
            "wall_time_s": round(sum(r.get("_wall", 0.0) for r in rs), 4),
        })
    return out


def summary_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(summary)
    return buf.getvalue()


def log_loglog(n):
    return math.log2(n) * math.log2(math.log2(n))


def scaling_check(rows, family, ref_n=64, factor=3.0, growth=math.log2, variant=None, policy=None):
    """Calibrate ``K = median(ref_n) / growth(ref_n)`` and test ``median <= factor * K * growth(n)``."""
    med = {}
    for r in rows:
        if r["family"] != family or r["stabilized"] != "true":
            continue
        if variant and r["variant"] != variant or policy and r["policy"] != policy:
            continue
        med.setdefault(int(r["n"]), []).append(int(r["rounds"]))
    med = {n: statistics.median(v) for n, v in sorted(med.items())}
    if ref_n not in med:
        raise ConfigError("CONFIG_INVALID", f"no stabilized runs at reference size {ref_n}")
    k = med[ref_n] / growth(ref_n)
    checks = {n: (m, factor * k * growth(n), m <= factor * k * growth(n)) for n, m in med.items() if n > ref_n}
    return {"K": k, "medians": med, "checks": checks, "passed": all(c[2] for c in checks.values())}


# verification of result / trace files


class Verdict:
    def __init__(self):
        self.lines = []
        self.ok = True

    def check(self, name, passed, detail=""):
        self.ok &= bool(passed)
        self.lines.append(f"{name}: {'PASS' if passed else 'FAIL'}" + (f" ({detail})" if detail else ""))

    def note(self, text):
        self.lines.append(text)


def _verify_final(v: Verdict, g, variant, levels, lmax, claimed_mis, claimed_stable):
    state = LevelState(np.array(levels, dtype=np.int64), np.array(lmax, dtype=np.int64))
    sets = stable_sets(g, state, variant)
    if claimed_stable:
        v.check("all_stable", len(sets.stable) == g.n, f"{g.n - len(sets.stable)} unstable vertices")
        verdict = is_valid_mis(g, sets.mis)
        v.check("mis_oracle", verdict.valid, f"{verdict.reason} witness={verdict.witness}")
        if claimed_mis is not None:
            v.check("mis_matches_record", sorted(sets.mis) == sorted(claimed_mis))
    else:
        v.check("stabilized", False, "run did not stabilize")
    return state, sets


def verify_result_file(path, closure_rounds=0) -> Verdict:
    try:
        rec = json.loads(Path(path).read_text())
        if rec.get("format") != RESULT_FORMAT:
            raise TraceError("PARSE", f"{path}: not a {RESULT_FORMAT} file")
        g = build_graph(rec["n"], rec["edges"])
        variant = Variant.parse(rec["variant"])
        levels, lmax = rec["final_levels"], rec["lmax"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise TraceError("PARSE", str(exc)) from None
    v = Verdict()
    state, sets = _verify_final(v, g, variant, levels, lmax, rec.get("mis"), rec.get("stabilized"))
    if closure_rounds and len(sets.stable) == g.n:
        v.check("closure", check_closure(g, variant, state, closure_rounds, rec.get("seed", 0)))
    return v


def verify_trace_file(path, audit="auto", samples=200, seed=0) -> Verdict:
    from . import kernels
    from .diagnostics import level_mu_monitor, solo_beep_audit, platinum_samples
    from .sim import variant_code

    trace, result = read_jsonl(path)
    g, variant, lmax = trace.graph, trace.variant, np.asarray(trace.lmax)
    v = Verdict()
    if audit == "on" and not trace.has_events:
        raise TraceError("TRACE_WINDOW_MISSING", "audit requested but the trace has no round events")
    final_levels = None
    if result is not None and "final_levels" in result:
        final_levels = result["final_levels"]
        if trace.has_levels:
            v.check("final_levels_consistent", list(trace.levels_at(trace.final_round)) == list(final_levels))
    elif trace.has_levels:
        final_levels = trace.levels_at(trace.final_round).tolist()
    if final_levels is None:
        v.check("final_state_present", False, "no final levels in trace")
        return v
    claimed_stable = result.get("stabilized", True) if result is not None else True
    claimed_mis = result.get("mis") if result is not None else None
    _verify_final(v, g, variant, final_levels, lmax, claimed_mis, claimed_stable)

    if trace.has_levels and trace.has_events:
        code = variant_code(variant)
        seed = trace.seed
        faults = set(trace.fault_rounds)
        bad = None
        for t in range(1, trace.final_round):
            if t + 1 in faults:
                continue  # state was overwritten by a fault before round t+1
            new = kernels.step(g.indptr, g.indices, trace.levels_at(t), lmax, code, seed, t)[0]
            if not np.array_equal(new, trace.levels_at(t + 1)):
                bad = t
                break
        v.check("replay", bad is None, f"round {bad} does not reproduce" if bad else "")
    if variant is Variant.V1 and trace.has_levels:
        viol = level_mu_monitor(trace)
        v.check("level_or_mu_positive", not viol, f"{len(viol)} violations, first {viol[:3]}")
    if audit != "off" and trace.has_events and variant is Variant.V1 and trace.has_levels:
        picks = platinum_samples(trace, samples, np.random.default_rng(seed))
        missing = [(u, t) for u, t in picks if solo_beep_audit(trace, u, t) is None]
        v.check("solo_beep_witness", not missing, f"{len(picks)} platinum rounds audited, missing {missing[:3]}")
    return v


def verify_file(path, audit="auto", samples=200, closure_rounds=0) -> Verdict:
    try:
        with open(path) as fh:
            first = json.loads(fh.readline() or "null")
    except OSError as exc:
        raise TraceError("PARSE", str(exc)) from None
    except json.JSONDecodeError:
        raise TraceError("PARSE", f"{path}: first line is not JSON") from None
    if isinstance(first, dict) and first.get("format") == RESULT_FORMAT:
        return verify_result_file(path, closure_rounds)
    return verify_trace_file(path, audit, samples)
