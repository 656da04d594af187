import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beepmis import _pykernels
from beepmis.diagnostics import (
    ETA_GLOBAL_BOUND,
    classify_levels,
    classify_round,
    compute_eta,
    compute_eta_prime,
    compute_mu,
    eta_bound_violations,
    eta_monotone_violations,
    eta_numerators,
    eta_prime_nonzero,
    level_mu_monitor,
    solo_beep_audit,
    platinum_samples,
)
from beepmis.errors import ProtocolError, TraceError
from beepmis.graph import GraphFamilySpec, build_graph, generate
from beepmis.protocol import LevelState, LmaxPolicy, ProtocolConfig, beep_probability
from beepmis.sim import FaultSpec, RoundEvents, run_until_stable
from beepmis.trace import Trace
from beepmis.verifier import stable_sets

V1_GLOBAL = ProtocolConfig("V1", LmaxPolicy("GLOBAL_MAX_DEGREE", 15))
V1_LOCAL = ProtocolConfig("V1", LmaxPolicy("LOCAL_DEGREE", 30))


def st8(levels, lmax):
    return LevelState(np.array(levels, dtype=np.int64), np.array(lmax, dtype=np.int64))


def brute(g, levels, lmax, stable):
    """Every classifier straight from its definition, in exact rationals."""
    n = g.n
    p = [beep_probability(int(levels[v]), int(lmax[v])) for v in range(n)]
    d = [sum((p[u] for u in g.adjacency[v]), Fraction(0)) for v in range(n)]
    mu = [min((Fraction(int(levels[u]), int(lmax[u])) for u in g.adjacency[v]), default=Fraction(1))
          for v in range(n)]
    prominent = [levels[v] <= 0 for v in range(n)]
    platinum = [any(prominent[u] for u in (v, *g.adjacency[v])) for v in range(n)]
    light = [mu[v] > 0 and (d[v] <= 10 or levels[v] <= 0) for v in range(n)]
    d_light = [sum((p[u] for u in g.adjacency[v] if light[u]), Fraction(0)) for v in range(n)]
    golden = [(levels[v] <= 1 and d[v] <= Fraction(2, 100)) or d_light[v] > Fraction(1, 1000)
              for v in range(n)]
    eta = [sum((Fraction(1, 2 ** int(lmax[u])) for u in g.adjacency[v] if u not in stable), Fraction(0))
           for v in range(n)]
    eta_p = [sum((Fraction(1, 2 ** int(lmax[v])) for u in g.adjacency[v]
                  if u not in stable and lmax[u] > lmax[v]), Fraction(0)) for v in range(n)]
    return dict(p=p, d=d, mu=mu, prominent=prominent, platinum=platinum, light=light,
                d_light=d_light, golden=golden, eta=eta, eta_prime=eta_p)


def compare(g, levels, lmax):
    s = stable_sets(g, st8(levels, lmax), "V1").stable
    diag = classify_levels(g, levels, lmax, s)
    want = brute(g, levels, lmax, s)
    assert diag.p == want["p"]
    assert diag.d == want["d"]
    assert diag.mu == want["mu"]
    assert diag.prominent_mask.tolist() == want["prominent"]
    assert diag.platinum_for.tolist() == want["platinum"]
    assert diag.light_mask.tolist() == want["light"]
    assert diag.d_light == want["d_light"]
    assert diag.golden_for.tolist() == want["golden"]
    assert diag.eta == want["eta"] and diag.eta_prime == want["eta_prime"]
    assert all(a == b + c for a, b, c in zip(diag.d, diag.d_light, diag.d_heavy))
    if len(set(lmax.tolist())) == 1:
        assert all(e >= ep == 0 for e, ep in zip(diag.eta, diag.eta_prime))
    assert all(0 <= x <= 1 for x in diag.p)


@pytest.mark.parametrize("edges", [[(0, 1)], [(0, 1), (1, 2)], [(0, 1), (1, 2), (0, 2)],
                                   [(0, 1), (0, 2), (0, 3)]])
@pytest.mark.parametrize("cap", [2, 3])
def test_classifiers_exhaustive_grid(edges, cap):
    n = 1 + max(max(e) for e in edges)
    g = build_graph(n, edges)
    for lmax in itertools.product(range(1, cap + 1), repeat=n):
        lmax = np.array(lmax)
        for levels in itertools.product(*(range(-c, c + 1) for c in lmax)):
            compare(g, np.array(levels), lmax)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 8), st.floats(0, 1), st.integers(0, 10**6))
def test_classifiers_random_small(n, p, seed):
    g = generate(GraphFamilySpec("GNP", n, p=p, seed=seed))
    rng = np.random.default_rng(seed)
    lmax = rng.integers(1, 5, size=n)
    compare(g, rng.integers(-lmax, lmax + 1), lmax)


def test_classifiers_wide_dyadics():
    # large caps push the exact arithmetic onto Python ints
    g = generate(GraphFamilySpec("CLIQUE", 6))
    rng = np.random.default_rng(1)
    lmax = np.array([60, 61, 62, 63, 40, 2])
    for _ in range(30):
        compare(g, rng.integers(-lmax, lmax + 1), lmax)


def test_eta_prime_can_exceed_eta_with_mixed_caps():
    # each higher-capped unstable neighbour adds 2**-lmax(v) to eta' but only
    # 2**-lmax(u) < 2**-lmax(v) to eta
    g = build_graph(2, [(0, 1)])
    d = classify_levels(g, np.array([1, 1]), np.array([1, 2]))
    assert d.eta[0] == Fraction(1, 4) and d.eta_prime[0] == Fraction(1, 2)


def test_mu_examples():
    g = build_graph(3, [(0, 1), (0, 2)])
    assert compute_mu(g, st8([0, 18, 18], [18] * 3), 0) == 1
    assert compute_mu(g, st8([0, -18, 18], [18] * 3), 0) == -1
    assert compute_mu(g, st8([0, 3, 9], [18] * 3), 0) == Fraction(3, 18)
    assert compute_mu(build_graph(1, []), st8([-4], [4]), 0) == 1


def test_eta_examples():
    g = generate(GraphFamilySpec("STAR", 6))
    s = st8([-18] + [18] * 5, [18] * 6)
    assert compute_eta(g, s, set(range(6)), 0) == 0
    assert compute_eta(g, s, set(), 0) == Fraction(5, 2**18)
    assert compute_eta_prime(g, s, set(), 0) == 0
    s2 = st8([1] * 6, [10, 12, 12, 8, 8, 8])
    assert compute_eta_prime(g, s2, set(), 0) == Fraction(2, 2**10)
    eta, eta_p = eta_numerators(g, s2.lmax, np.zeros(6, bool), 12)
    assert eta[0] == 2 * 1 + 3 * 16 and eta_p[0] == 2 * 4


def test_classify_examples():
    iso = classify_round(build_graph(1, []), st8([-5], [5]))
    assert iso.prominent == {0} and iso.platinum_for.tolist() == [True]
    g = build_graph(3, [(0, 1), (0, 2)])
    a = classify_round(g, st8([1, 18, 18], [18] * 3))
    assert a.d[0] == 0 and a.golden_a[0] and a.golden_for[0]
    b = classify_round(build_graph(2, [(0, 1)]), st8([5, 1], [18, 18]))
    assert b.light_mask[1] and b.d_light[0] == Fraction(1, 2)
    assert b.golden_b[0] and not b.golden_a[0]
    c = b.counters()
    assert c["light"] == 2 and c["prominent"] == 0


def test_expected_beepers_match_monte_carlo():
    g = generate(GraphFamilySpec("GNP", 12, p=0.5, seed=5))
    lmax = np.full(g.n, 6)
    levels = np.array([1, 2, 3, 1, 4, 5, 6, 2, 1, 3, 0, 2])
    d = classify_levels(g, levels, lmax).d
    B = 200_000
    seeds = np.arange(B, dtype=np.uint64).reshape(-1, 1)
    b1, _ = _pykernels.beep_draws(np.broadcast_to(levels, (B, g.n)), lmax, 1, seeds, 3)
    counts = _pykernels.neighbor_count(g.indptr, g.indices, b1)
    for v in range(g.n):
        mean, sd = counts[:, v].mean(), counts[:, v].std(ddof=1)
        if sd == 0:
            assert mean == float(d[v])
        else:
            assert abs(mean - float(d[v])) <= 3 * sd / np.sqrt(B), v


def traced(g, cfg, seed, faults=(), init="UNIFORM_RANDOM", levels=None):
    tr = Trace()
    res = run_until_stable(g, cfg, init, seed, faults=faults, explicit_levels=levels, recorder=tr)
    return tr, res


@pytest.mark.parametrize("family", ["GNP", "STAR", "CLIQUE", "RANDOM_TREE"])
def test_eta_bounds_over_runs(family):
    g = generate(GraphFamilySpec(family, 128, p=0.06, seed=2))
    for seed in range(5):
        tr, _ = traced(g, V1_GLOBAL, seed, [FaultSpec(25, fraction=0.2)])
        assert eta_bound_violations(tr) == []
        assert eta_prime_nonzero(tr) == []
        assert eta_monotone_violations(tr) == []
        tr, _ = traced(g, V1_LOCAL, seed)
        assert eta_bound_violations(tr, Fraction(1, 10000)) == []
        assert eta_monotone_violations(tr) == []
    star = generate(GraphFamilySpec("STAR", 40))
    tr, _ = traced(star, V1_LOCAL, 0)
    assert eta_prime_nonzero(tr)  # caps differ, so leaves see a higher-capped neighbour
    assert ETA_GLOBAL_BOUND == Fraction(1, 2**15)


def test_level_mu_monitor_all_min_k2():
    g = build_graph(2, [(0, 1)])
    cfg = ProtocolConfig("V1", LmaxPolicy("EXPLICIT", explicit_values=(4, 4)))
    for seed in range(50):
        tr, _ = traced(g, cfg, seed, init="ALL_MIN")
        assert level_mu_monitor(tr) == []
        # both vertices climb together from the minimum
        assert tr.levels_at(5).tolist() == [0, 0]


def test_level_mu_monitor_flags_doctored_trace():
    g = generate(GraphFamilySpec("CYCLE", 32))
    tr, res = traced(g, V1_GLOBAL, 3)
    assert level_mu_monitor(tr) == []
    t = tr.final_round
    assert t > 19
    lv = tr.lmax.copy()
    lv[[7, 8]] = -1
    tr.levels[t - 1] = lv
    assert sorted(level_mu_monitor(tr)) == [(t, 7), (t, 8)]
    with pytest.raises(ProtocolError):
        level_mu_monitor(traced(g, ProtocolConfig("V2", LmaxPolicy("TWO_HOP_DEGREE", 15)), 0)[0])


def synthetic_k2(rounds=12, lmax=4, beep_at=5):
    """Vertex 0 idles at level 1, solo-beeps in round ``beep_at`` and stays at the minimum."""
    g = build_graph(2, [(0, 1)])
    tr = Trace()
    tr.start(g, ProtocolConfig("V1", LmaxPolicy("EXPLICIT", explicit_values=(lmax, lmax))),
             np.array([lmax, lmax]), 0, [])
    for t in range(1, rounds + 1):
        lv = np.array([1 if t <= beep_at else -lmax, lmax])
        beeped = t >= beep_at
        ev = RoundEvents(t, np.array([beeped, False]), np.array([False, beeped]),
                         np.zeros(2, bool), np.zeros(2, bool))
        mis = np.array([t > beep_at, False])
        tr.record(t, lv, mis, np.array([t > beep_at] * 2), ev)
    return tr


def test_solo_beep_audit_synthetic():
    tr = synthetic_k2()
    for v in (0, 1):
        u, tp = solo_beep_audit(tr, v, 10)
        assert u == 0 and tr.events_at(tp).beeped_ch1[0] and tr.levels_at(tp + 1)[0] == -4
    with pytest.raises(ProtocolError) as exc:
        solo_beep_audit(tr, 0, 5)
    assert exc.value.code == "PRECONDITION"
    tr2 = synthetic_k2(rounds=12, beep_at=11)
    with pytest.raises(ProtocolError) as exc:
        solo_beep_audit(tr2, 0, 8)
    assert exc.value.code == "NOT_PLATINUM"
    tr.events = [None] * len(tr.events)
    with pytest.raises(TraceError) as exc:
        solo_beep_audit(tr, 0, 10)
    assert exc.value.code == "TRACE_WINDOW_MISSING"


def test_solo_beep_audit_finds_witness_in_runs():
    hits = 0
    for family in ("GNP", "CLIQUE", "STAR_OF_CLIQUES", "CYCLE"):
        g = generate(GraphFamilySpec(family, 100, p=0.08, seed=1, k=5))
        for seed in range(4):
            tr, _ = traced(g, V1_GLOBAL, seed, [FaultSpec(30, fraction=0.2)])
            for v, t in platinum_samples(tr, 60, np.random.default_rng(seed)):
                assert solo_beep_audit(tr, v, t) is not None
                hits += 1
    assert hits > 200
