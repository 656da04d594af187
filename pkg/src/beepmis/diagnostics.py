"""Analytic per-round quantities and the round/vertex classifiers.

Every quantity here is a dyadic rational (levels are integers and beep
probabilities are powers of two), so vectors are stored as integer
numerators over a common denominator ``2**scale``; threshold comparisons are
exact. Nothing in this module feeds back into the protocol.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from ._pykernels import neighbor_count
from .errors import ProtocolError, TraceError
from .graph import Graph
from .protocol import LevelState, Variant

LIGHT_D_MAX = Fraction(10)
GOLDEN_D_MAX = Fraction(2, 100)
GOLDEN_D_LIGHT_MIN = Fraction(1, 1000)
ETA_SMALL = Fraction(1, 10000)
ETA_GLOBAL_BOUND = Fraction(1, 2**15)


def _numeric_dtype(g: Graph, scale: int):
    maxdeg = int(g.degrees.max()) if g.n else 0
    # headroom for sums over a neighbourhood and for 10 * 2**scale
    if scale + (maxdeg + 1).bit_length() + 4 <= 62:
        return np.int64
    return object


def _pow2(exps, dtype):
    exps = np.asarray(exps, dtype=np.int64)
    if dtype is object:
        return np.array([1 << int(e) for e in exps.ravel()], dtype=object).reshape(exps.shape)
    return np.left_shift(np.int64(1), exps)


def _nsum(g: Graph, x):
    """Neighbourhood sum along the last axis, exact for int64 and Python ints."""
    x = np.asarray(x)
    if x.dtype != object:
        a = g.adjacency_matrix
        return (a @ x.astype(np.int64)) if x.ndim == 1 else (a @ x.astype(np.int64).T).T
    vals = x[..., g.indices]
    c = np.zeros(vals.shape[:-1] + (vals.shape[-1] + 1,), dtype=x.dtype)
    if vals.shape[-1]:
        c[..., 1:] = np.cumsum(vals, axis=-1)
    return c[..., g.indptr[1:]] - c[..., g.indptr[:-1]]


def _floor_scaled(q: Fraction, scale: int) -> int:
    return (q.numerator << scale) // q.denominator


def _as_mask(stable, n):
    if stable is None:
        return np.zeros(n, dtype=bool)
    arr = np.asarray(stable)
    if arr.dtype == bool and arr.shape == (n,):
        return arr
    m = np.zeros(n, dtype=bool)
    m[np.asarray(sorted(stable), dtype=np.int64)] = True
    return m


def compute_mu(g: Graph, state: LevelState, v: int) -> Fraction:
    nbrs = g.adjacency[v]
    if not nbrs:
        return Fraction(1)  # vacuous minimum
    return min(Fraction(int(state.levels[u]), int(state.lmax[u])) for u in nbrs)


def compute_eta(g: Graph, state: LevelState, stable, v: int) -> Fraction:
    s = _as_mask(stable, g.n)
    return sum((Fraction(1, 2 ** int(state.lmax[u])) for u in g.adjacency[v] if not s[u]), Fraction(0))


def compute_eta_prime(g: Graph, state: LevelState, stable, v: int) -> Fraction:
    s = _as_mask(stable, g.n)
    own = int(state.lmax[v])
    count = sum(1 for u in g.adjacency[v] if not s[u] and state.lmax[u] > own)
    return Fraction(count, 2**own)


def eta_numerators(g: Graph, lmax, stable, scale=None, dtype=None):
    """``(eta, eta_prime)`` numerators over ``2**scale``; ``stable`` may be ``(T, n)``."""
    lmax = np.asarray(lmax, dtype=np.int64)
    scale = int(lmax.max()) if scale is None else scale
    dtype = dtype or _numeric_dtype(g, scale)
    stable = np.asarray(stable, dtype=bool)
    w = _pow2(scale - lmax, dtype)
    eta = _nsum(g, np.where(~stable, w, 0).astype(dtype))
    from scipy.sparse import csr_matrix

    higher = (lmax[g.indices] > lmax[g.rows]).astype(np.int64)
    h = csr_matrix((higher, g.indices, g.indptr), shape=(g.n, g.n))
    unstable = (~stable).astype(np.int64)
    counts = (h @ unstable) if unstable.ndim == 1 else (h @ unstable.T).T
    eta_prime = counts.astype(dtype) * w
    return eta, eta_prime


@dataclass(eq=False)
class RoundDiagnostics:
    """Quantities of one round start. ``*_num`` arrays are numerators over ``2**scale``."""

    graph: Graph
    levels: np.ndarray
    lmax: np.ndarray
    scale: int
    p_num: np.ndarray
    d_num: np.ndarray
    d_light_num: np.ndarray
    eta_num: np.ndarray
    eta_prime_num: np.ndarray
    mu_positive: np.ndarray
    prominent_mask: np.ndarray
    platinum_for: np.ndarray
    light_mask: np.ndarray
    golden_a: np.ndarray
    golden_b: np.ndarray

    @property
    def golden_for(self):
        return self.golden_a | self.golden_b

    @property
    def prominent(self):
        return frozenset(np.flatnonzero(self.prominent_mask).tolist())

    @property
    def light(self):
        return frozenset(np.flatnonzero(self.light_mask).tolist())

    @property
    def heavy(self):
        return frozenset(range(self.graph.n)) - self.light

    def _frac(self, arr):
        den = 1 << self.scale
        return [Fraction(int(x), den) for x in arr]

    @cached_property
    def p(self):
        return self._frac(self.p_num)

    @cached_property
    def d(self):
        return self._frac(self.d_num)

    @cached_property
    def d_light(self):
        return self._frac(self.d_light_num)

    @cached_property
    def d_heavy(self):
        return self._frac(self.d_num - self.d_light_num)

    @cached_property
    def eta(self):
        return self._frac(self.eta_num)

    @cached_property
    def eta_prime(self):
        return self._frac(self.eta_prime_num)

    @cached_property
    def mu(self):
        state = LevelState(self.levels, self.lmax)
        return [compute_mu(self.graph, state, v) for v in range(self.graph.n)]

    def counters(self):
        den = float(1 << self.scale)
        eta = self.eta_num
        return {
            "prominent": int(self.prominent_mask.sum()),
            "platinum_for": int(self.platinum_for.sum()),
            "light": int(self.light_mask.sum()),
            "golden_for": int(self.golden_for.sum()),
            "eta_min": float(min(eta)) / den if len(eta) else 0.0,
            "eta_max": float(max(eta)) / den if len(eta) else 0.0,
        }


def classify_levels(g: Graph, levels, lmax, stable=None) -> RoundDiagnostics:
    levels = np.asarray(levels, dtype=np.int64)
    lmax = np.asarray(lmax, dtype=np.int64)
    scale = int(lmax.max())
    dtype = _numeric_dtype(g, scale)
    interior = (levels > 0) & (levels < lmax)
    p_num = np.where(levels <= 0, _pow2(np.full(g.n, scale), dtype), 0).astype(dtype)
    p_num = np.where(interior, _pow2(np.where(interior, scale - levels, 0), dtype), p_num).astype(dtype)
    d_num = _nsum(g, p_num)
    mu_positive = neighbor_count(g.indptr, g.indices, levels <= 0) == 0
    prominent = levels <= 0
    platinum = prominent | (neighbor_count(g.indptr, g.indices, prominent) > 0)
    light = mu_positive & ((d_num <= _floor_scaled(LIGHT_D_MAX, scale)) | prominent)
    d_light = _nsum(g, np.where(light, p_num, 0).astype(dtype))
    golden_a = (levels <= 1) & (d_num <= _floor_scaled(GOLDEN_D_MAX, scale))
    golden_b = d_light > _floor_scaled(GOLDEN_D_LIGHT_MIN, scale)
    stable = _as_mask(stable, g.n)
    eta, eta_prime = eta_numerators(g, lmax, stable, scale, dtype)
    return RoundDiagnostics(
        g, levels, lmax, scale, p_num, d_num, d_light, eta, eta_prime,
        mu_positive, prominent, platinum, light, np.asarray(golden_a, bool), np.asarray(golden_b, bool),
    )


def classify_round(g: Graph, state: LevelState, stable=None) -> RoundDiagnostics:
    """Classify a V1 round start; ``stable`` is ``S_t`` as a mask or vertex set."""
    return classify_levels(g, state.levels, state.lmax, stable)


# trace monitors

_CHUNK_ELEMS = 1 << 22


def _ncount(g: Graph, mask):
    return _nsum(g, np.asarray(mask, dtype=np.int64))


def _by_round_chunks(g: Graph, matrix, fn):
    """Apply ``fn`` to row blocks of a ``(T, n)`` matrix, bounding ``T * 2m`` memory."""
    rows = max(1, _CHUNK_ELEMS // max(1, g.indices.size))
    parts = [fn(matrix[i:i + rows]) for i in range(0, matrix.shape[0], rows)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)



def _eligible_rounds(trace):
    """Rounds whose state lies more than ``max lmax`` rounds into a fault-free window."""
    big = int(np.max(trace.lmax))
    return np.array(
        [t - trace.window_start(t) > big for t in range(1, trace.final_round + 1)], dtype=bool
    )


def level_mu_monitor(trace):
    """``(t, v)`` pairs where a late round has ``level <= 0`` and ``mu <= 0``.

    Round ``t`` is checked once more than ``max lmax`` rounds have passed
    since the start of its fault-free window (counting the window's first
    round-start state as step 0).
    """
    if trace.variant is not Variant.V1:
        raise ProtocolError("PRECONDITION", "the level/mu invariant is defined for V1 traces")
    g = trace.graph
    nonpos = trace.level_matrix() <= 0
    bad = nonpos & _by_round_chunks(g, nonpos, lambda m: _ncount(g, m) > 0)
    bad &= _eligible_rounds(trace)[:, None]
    return [(int(t) + 1, int(v)) for t, v in zip(*np.nonzero(bad))]


def platinum_matrix(trace):
    g = trace.graph
    prom = trace.level_matrix() <= 0
    return prom | _by_round_chunks(g, prom, lambda m: _ncount(g, m) > 0)


def platinum_samples(trace, k, rng=None):
    """Up to ``k`` distinct ``(v, t)`` platinum pairs eligible for the solo-beep audit."""
    if k <= 0:
        return []
    plat = platinum_matrix(trace) & _eligible_rounds(trace)[:, None]
    ts, vs = np.nonzero(plat)
    if ts.size == 0:
        return []
    rng = rng if rng is not None else np.random.default_rng(0)
    pick = rng.choice(ts.size, size=min(k, ts.size), replace=False)
    return sorted((int(vs[i]), int(ts[i]) + 1) for i in pick)


def solo_beep_audit(trace, v, t):
    """Find ``(u, t')`` with ``u`` in ``N+(v)`` beeping alone in round ``t'``.

    The search window is ``t - lmax(u) - 1 <= t' <= t - 1``: a vertex at level
    0 at the start of round ``t`` last beeped alone ``lmax(u) + 1`` rounds
    earlier. Returns ``None`` if no witness exists.
    """
    if not trace.has_events:
        raise TraceError("TRACE_WINDOW_MISSING", "trace holds no round events")
    g, lmax = trace.graph, np.asarray(trace.lmax)
    start = trace.window_start(t)
    if t - start <= int(lmax.max()):
        raise ProtocolError("PRECONDITION", f"round {t} is within max lmax rounds of round {start}")
    levels = trace.levels_at(t)
    closed = (v, *g.adjacency[v])
    if not any(levels[u] <= 0 for u in closed):
        raise ProtocolError("NOT_PLATINUM", f"round {t} is not a platinum round of vertex {v}")
    ordered = sorted(closed, key=lambda u: (levels[u] > 0, u))
    for u in ordered:
        lo = max(start, t - int(lmax[u]) - 1)
        for tp in range(t - 1, lo - 1, -1):
            ev = trace.events_at(tp)
            if ev.beeped_ch1[u] and not ev.heard_ch1[u]:
                if trace.has_levels and trace.levels_at(tp + 1)[u] != -lmax[u]:
                    continue
                return (int(u), tp)
    return None


def _eta_by_round(trace, scale=None, dtype=None):
    """Per-round ``(eta, eta_prime)`` numerators; evaluated once per distinct stable set."""
    g, lmax = trace.graph, np.asarray(trace.lmax)
    scale = int(lmax.max()) if scale is None else scale
    dtype = dtype or _numeric_dtype(g, scale)
    masks, inverse = np.unique(trace.stable_matrix(), axis=0, return_inverse=True)
    eta, eta_prime = _by_round_chunks(g, masks, lambda m: eta_numerators(g, lmax, m, scale, dtype))
    inverse = inverse.reshape(-1)
    return eta[inverse], eta_prime[inverse]


def eta_bound_violations(trace, bound=ETA_GLOBAL_BOUND):
    """``(t, v)`` pairs with ``eta_t(v) > bound``, evaluated exactly."""
    g, lmax = trace.graph, np.asarray(trace.lmax)
    scale = max(int(lmax.max()), bound.denominator.bit_length())
    eta, _ = _eta_by_round(trace, scale, _numeric_dtype(g, scale))
    limit = _floor_scaled(bound, scale)
    return [(int(t) + 1, int(v)) for t, v in zip(*np.nonzero(eta > limit))]


def eta_prime_nonzero(trace):
    _, eta_prime = _eta_by_round(trace)
    return [(int(t) + 1, int(v)) for t, v in zip(*np.nonzero(eta_prime != 0))]


def eta_monotone_violations(trace):
    """``(t, v)`` where ``eta`` or ``eta'`` grows between consecutive fault-free rounds."""
    eta, eta_prime = _eta_by_round(trace)
    faults = set(trace.fault_rounds)
    out = []
    for t in range(2, trace.final_round + 1):
        if t in faults:
            continue
        grew = (eta[t - 1] > eta[t - 2]) | (eta_prime[t - 1] > eta_prime[t - 2])
        out.extend((t, int(v)) for v in np.flatnonzero(grew))
    return out
