"""Ground-truth oracles: MIS validity, stable sets, closure, exhaustive checks."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _pykernels, kernels
from .errors import ProtocolError
from .graph import Graph, build_graph
from .protocol import LevelState, Variant
from .sim import run_round, variant_code


@dataclass(frozen=True)
class StableSets:
    mis: frozenset
    stable: frozenset


def stable_sets_mask(g: Graph, levels, lmax, variant):
    return kernels.stable_masks(
        g.indptr,
        g.indices,
        np.ascontiguousarray(levels, dtype=np.int64),
        np.ascontiguousarray(lmax, dtype=np.int64),
        variant_code(variant),
    )


def stable_sets(g: Graph, state: LevelState, variant) -> StableSets:
    """MIS members (core level with every neighbour capped) and their closed neighbourhood."""
    mis, stable = stable_sets_mask(g, state.levels, state.lmax, variant)
    return StableSets(frozenset(np.flatnonzero(mis).tolist()), frozenset(np.flatnonzero(stable).tolist()))


class MISVerdict(NamedTuple):
    valid: bool
    reason: str
    witness: object = None

    def __bool__(self):
        return self.valid


def is_valid_mis(g: Graph, candidate) -> MISVerdict:
    chosen = set(int(v) for v in candidate)
    for v in sorted(chosen):
        if not 0 <= v < g.n:
            return MISVerdict(False, "out_of_range", v)
    for u in sorted(chosen):
        for w in g.adjacency[u]:
            if w in chosen and u < w:
                return MISVerdict(False, "independence", (u, w))
    for v in range(g.n):
        if v not in chosen and not any(u in chosen for u in g.adjacency[v]):
            return MISVerdict(False, "maximality", v)
    return MISVerdict(True, "ok")


def check_closure(g: Graph, variant, state: LevelState, extra_rounds, seed, start_round=1,
                  require_stable=True) -> bool:
    """Run ``extra_rounds`` more rounds and report whether the levels never move."""
    if require_stable and len(stable_sets(g, state, variant).stable) != g.n:
        raise ProtocolError("NOT_STABLE", "closure check needs an all-stable configuration")
    cur = state
    for k in range(extra_rounds):
        nxt, _ = run_round(g, cur, variant, seed, start_round + k)
        if not np.array_equal(nxt.levels, state.levels):
            return False
        cur = nxt
    return True


# exhaustive small-instance checking


def _canonical(n, edges):
    best = None
    for perm in itertools.permutations(range(n)):
        key = tuple(sorted(tuple(sorted((perm[u], perm[v]))) for u, v in edges))
        if best is None or key < best:
            best = key
    return best


def _connected(n, edges):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen, stack = {0}, [0]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def connected_graphs(n_cap, up_to_isomorphism=True):
    """All connected graphs on 1..n_cap vertices (one per isomorphism class by default)."""
    out = []
    for n in range(1, n_cap + 1):
        pairs = list(itertools.combinations(range(n), 2))
        seen = set()
        for mask in range(1 << len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
            if not _connected(n, edges):
                continue
            if up_to_isomorphism:
                key = _canonical(n, edges)
                if key in seen:
                    continue
                seen.add(key)
            out.append(build_graph(n, edges))
    return out


def simulate_batch(g: Graph, variant, lmax, inits, seeds, round_bound):
    """Run every (initial vector, seed) pair for up to ``round_bound`` rounds.

    Returns ``(stab_round, mis)`` arrays of shape ``(len(inits), len(seeds))``
    and ``(len(inits), len(seeds), n)``; ``stab_round`` is ``-1`` for runs that
    did not stabilize. Each run matches ``run_until_stable`` with explicit
    initial levels and the same seed.
    """
    code = variant_code(variant)
    inits = np.asarray(inits, dtype=np.int64).reshape(-1, g.n)
    seeds = np.asarray(seeds, dtype=np.uint64)
    n_init, n_seed = len(inits), len(seeds)
    levels = np.repeat(inits, n_seed, axis=0)
    seed_col = np.tile(seeds, n_init)
    lmax = np.asarray(lmax, dtype=np.int64)
    idx = np.arange(levels.shape[0])
    stab = np.full(levels.shape[0], -1, dtype=np.int64)
    mis_out = np.zeros(levels.shape, dtype=bool)
    for t in range(1, round_bound + 2):
        mis, stable = _pykernels.stable_masks(g.indptr, g.indices, levels, lmax, code)
        done = stable.all(axis=1)
        if done.any():
            stab[idx[done]] = t
            mis_out[idx[done]] = mis[done]
            keep = ~done
            levels, seed_col, idx = levels[keep], seed_col[keep], idx[keep]
        if idx.size == 0 or t > round_bound:
            break
        levels = _pykernels.step(g.indptr, g.indices, levels, lmax, code, seed_col, t)[0]
    return stab.reshape(n_init, n_seed), mis_out.reshape(n_init, n_seed, g.n)


def all_initial_vectors(lmax, variant):
    lo = [-c if Variant.parse(variant) is Variant.V1 else 0 for c in lmax]
    return np.array(list(itertools.product(*(range(a, c + 1) for a, c in zip(lo, lmax)))), dtype=np.int64)


def smallgraph_check(g: Graph, variant, lmax, seeds=100, round_bound=None, base_seed=0):
    """Exhaustive check of one graph with fixed caps; returns a partial report."""
    variant = Variant.parse(variant)
    lmax = [int(c) for c in lmax]
    round_bound = round_bound or 50 * max(lmax)
    inits = all_initial_vectors(lmax, variant)
    seed_list = [base_seed + s for s in range(seeds)]
    stab, mis = simulate_batch(g, variant, lmax, inits, seed_list, round_bound)
    failures, unstable, outcomes = [], [], {}
    edges = [list(e) for e in g.edges()]
    for i, j in zip(*np.nonzero(stab >= 0)):
        key = tuple(np.flatnonzero(mis[i, j]).tolist())
        if key not in outcomes:
            outcomes[key] = is_valid_mis(g, key)
        verdict = outcomes[key]
        if not verdict.valid:
            failures.append({"edges": edges, "lmax": lmax, "init": inits[i].tolist(),
                             "seed": seed_list[j], "mis": list(key), "reason": verdict.reason})
    for i, j in zip(*np.nonzero(stab < 0)):
        if len(unstable) < 20:
            unstable.append({"edges": edges, "lmax": lmax, "init": inits[i].tolist(), "seed": seed_list[j]})
    pair_ok = (stab >= 0).all(axis=1)
    return {
        "n": g.n,
        "edges": edges,
        "lmax": lmax,
        "pairs": int(len(inits)),
        "pairs_stabilized": int(pair_ok.sum()),
        "runs": int(stab.size),
        "runs_stabilized": int((stab >= 0).sum()),
        "max_stabilization_round": int(stab.max()) if stab.size else 0,
        "outcomes": sorted(list(k) for k in outcomes),
        "mis_failures": failures,
        "unstabilized_samples": unstable,
    }


def exhaustive_smallgraph_check(variant, lmax_cap, n_cap, seeds=100, round_bound=None,
                                lmax_mode="uniform", min_stabilized_fraction=0.99):
    """Every connected graph with at most ``n_cap`` vertices, every initial vector.

    ``lmax_mode="uniform"`` gives every vertex the cap ``lmax_cap``; ``"all"``
    additionally enumerates every cap vector in ``[2, lmax_cap]^n`` (a cap of 1
    has no beeping level above the decrement floor, so a vertex at level 1
    could never leave it).
    A (graph, initial vector) pair counts as stabilized when all its seeds do.
    """
    if n_cap > 5 or lmax_cap > 4:
        raise ProtocolError("PRECONDITION", "exhaustive check limited to n_cap <= 5, lmax_cap <= 4")
    variant = Variant.parse(variant)
    round_bound = round_bound or 50 * lmax_cap
    per_graph = []
    for g in connected_graphs(n_cap):
        if lmax_mode == "all":
            cap_vectors = itertools.product(range(2, lmax_cap + 1), repeat=g.n)
        else:
            cap_vectors = [(lmax_cap,) * g.n]
        for caps in cap_vectors:
            per_graph.append(smallgraph_check(g, variant, caps, seeds, round_bound))
    pairs = sum(r["pairs"] for r in per_graph)
    pairs_ok = sum(r["pairs_stabilized"] for r in per_graph)
    failures = [f for r in per_graph for f in r["mis_failures"]]
    fraction = pairs_ok / pairs if pairs else 1.0
    return {
        "variant": variant.name,
        "lmax_cap": lmax_cap,
        "n_cap": n_cap,
        "lmax_mode": lmax_mode,
        "seeds": seeds,
        "round_bound": round_bound,
        "graphs": len({tuple(map(tuple, r["edges"])) + (r["n"],) for r in per_graph}),
        "pairs": pairs,
        "pairs_stabilized": pairs_ok,
        "stabilized_pair_fraction": fraction,
        "runs": sum(r["runs"] for r in per_graph),
        "runs_stabilized": sum(r["runs_stabilized"] for r in per_graph),
        "mis_failures": failures,
        "unstabilized_samples": [s for r in per_graph for s in r["unstabilized_samples"]][:50],
        "passed": not failures and fraction >= min_stabilized_fraction,
    }
