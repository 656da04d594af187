import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beepmis.errors import ProtocolError
from beepmis.graph import GraphFamilySpec, build_graph, generate
from beepmis.protocol import LevelState, LmaxPolicy, ProtocolConfig
from beepmis.sim import run_until_stable
from beepmis.verifier import (
    all_initial_vectors,
    check_closure,
    connected_graphs,
    exhaustive_smallgraph_check,
    is_valid_mis,
    simulate_batch,
    smallgraph_check,
    stable_sets,
)

PATH3 = build_graph(3, [(0, 1), (1, 2)])


def st8(levels, lmax):
    return LevelState(np.array(levels, dtype=np.int64), np.array(lmax, dtype=np.int64))


def test_is_valid_mis_examples():
    assert is_valid_mis(PATH3, {0, 2})
    assert is_valid_mis(PATH3, {1})
    v = is_valid_mis(PATH3, {0})
    assert not v and v.reason == "maximality" and v.witness == 2
    v = is_valid_mis(PATH3, {0, 1})
    assert v.reason == "independence" and v.witness == (0, 1)
    assert is_valid_mis(PATH3, {5}).reason == "out_of_range"
    assert not is_valid_mis(PATH3, set())


def _all_mis(g):
    out = []
    for mask in range(1 << g.n):
        s = {v for v in range(g.n) if mask >> v & 1}
        indep = all(u not in s for v in s for u in g.adjacency[v])
        maximal = all(v in s or any(u in s for u in g.adjacency[v]) for v in range(g.n))
        if indep and maximal:
            out.append(s)
    return out


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 9), st.floats(0, 1), st.integers(0, 10**6))
def test_is_valid_mis_matches_enumeration(n, p, seed):
    g = generate(GraphFamilySpec("GNP", n, p=p, seed=seed))
    valid = _all_mis(g)
    for mask in range(1 << n):
        s = {v for v in range(n) if mask >> v & 1}
        assert bool(is_valid_mis(g, s)) == (s in valid)


def test_stable_sets_examples():
    k2 = build_graph(2, [(0, 1)])
    s = stable_sets(k2, st8([-18, 18], [18, 18]), "V1")
    assert s.mis == {0} and s.stable == {0, 1}
    assert stable_sets(k2, st8([1, 1], [18, 18]), "V1").stable == frozenset()
    assert stable_sets(build_graph(1, []), st8([-7], [7]), "V1").mis == {0}
    assert stable_sets(k2, st8([0, 19], [19, 19]), "V2").stable == {0, 1}
    assert stable_sets(k2, st8([0, 18], [19, 19]), "V2").mis == frozenset()
    # core level but a neighbour not at its cap
    assert stable_sets(PATH3, st8([-5, 4, 5], [5, 5, 5]), "V1").mis == frozenset()


def test_closure_examples():
    g = generate(GraphFamilySpec("GNP", 60, p=0.1, seed=2))
    for variant, kind in (("V1", "GLOBAL_MAX_DEGREE"), ("V2", "TWO_HOP_DEGREE")):
        cfg = ProtocolConfig(variant, LmaxPolicy(kind, 15))
        res = run_until_stable(g, cfg, seed=4)
        L = int(res.final_state.lmax.max())
        assert check_closure(g, variant, res.final_state, 10 * L, seed=99)
    # an MIS neighbour pulled below its cap moves again
    s = st8([-18, 17, 18], [18, 18, 18])
    assert not check_closure(PATH3, "V1", s, 5, 0, require_stable=False)
    with pytest.raises(ProtocolError) as exc:
        check_closure(PATH3, "V1", s, 5, 0)
    assert exc.value.code == "NOT_STABLE"


def test_connected_graph_counts():
    # connected graphs up to isomorphism on 1..5 vertices: 1, 1, 2, 6, 21
    assert len(connected_graphs(4)) == 1 + 1 + 2 + 6
    assert len(connected_graphs(5)) == 1 + 1 + 2 + 6 + 21
    # labelled connected graphs on 4 vertices: 38
    assert sum(g.n == 4 for g in connected_graphs(4, up_to_isomorphism=False)) == 38


def test_smallcheck_examples():
    k2 = build_graph(2, [(0, 1)])
    r = smallgraph_check(k2, "V1", [3, 3], seeds=20)
    assert r["pairs"] == len(all_initial_vectors([3, 3], "V1")) == 49
    assert {tuple(o) for o in r["outcomes"]} == {(0,), (1,)}
    assert not r["mis_failures"]
    k3 = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    assert {tuple(o) for o in smallgraph_check(k3, "V1", [2, 2, 2], seeds=20)["outcomes"]} \
        == {(0,), (1,), (2,)}
    empty = build_graph(3, [])
    r = smallgraph_check(empty, "V2", [3, 3, 3], seeds=10)
    assert r["outcomes"] == [[0, 1, 2]] and r["pairs_stabilized"] == r["pairs"]


def test_batch_matches_single_runs():
    g = build_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    lmax = [3, 3, 3, 3]
    inits = all_initial_vectors(lmax, "V1")[::37]
    seeds = list(range(5))
    stab, mis = simulate_batch(g, "V1", lmax, inits, seeds, 200)
    cfg = ProtocolConfig("V1", LmaxPolicy("EXPLICIT", explicit_values=tuple(lmax)))
    for i, init in enumerate(inits):
        for j, s in enumerate(seeds):
            res = run_until_stable(g, cfg, "EXPLICIT", s, 200, explicit_levels=init)
            assert res.stabilized == (stab[i, j] >= 0)
            if res.stabilized:
                assert res.stabilization_round == stab[i, j]
                assert res.mis_set == set(np.flatnonzero(mis[i, j]).tolist())


def test_exhaustive_small():
    rep = exhaustive_smallgraph_check("V2", 2, 3, seeds=10)
    assert rep["passed"] and rep["graphs"] == 4 and not rep["mis_failures"]
    rep = exhaustive_smallgraph_check("V1", 2, 3, seeds=10, lmax_mode="all")
    assert rep["passed"]
    with pytest.raises(ProtocolError):
        exhaustive_smallgraph_check("V1", 5, 3)
