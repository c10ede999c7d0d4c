"""Exact dynamic-programming solvers used as oracles for the local search."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapExceededError, ParameterError
from .models import ScenarioSpec, ScoreTables, TrackCollection, score_tables

JOINT_ROW_CAP = 10**4
# bound on the (rows_prev x columns) block materialized at once
_BLOCK_ENTRIES = 1 << 22


@dataclass
class ChainProblem:
    """Chain-structured max-sum problem.

    ``node_scores[t]`` has one entry per row of column ``t``.  Transition
    scores between columns ``t-1`` and ``t`` come either from the dense
    ``edge_scores[t-1]`` of shape ``(R[t-1], R[t])`` or, for lattices too big
    to hold, from ``edge_block(t, start, stop)`` returning the columns
    ``start:stop`` of that matrix.
    """

    node_scores: Sequence[np.ndarray]
    edge_scores: Optional[Sequence[np.ndarray]] = None
    edge_block: Optional[Callable[[int, int, int], np.ndarray]] = None

    def __post_init__(self):
        self.node_scores = [np.asarray(n, dtype=np.float64) for n in self.node_scores]
        if not self.node_scores:
            raise ParameterError("a chain needs at least one column")
        if any(n.ndim != 1 or n.size < 1 for n in self.node_scores):
            raise ParameterError("every column needs at least one row")
        if (self.edge_scores is None) == (self.edge_block is None) and len(self.node_scores) > 1:
            raise ParameterError("give exactly one of edge_scores or edge_block")
        if self.edge_scores is not None:
            self.edge_scores = [np.asarray(e, dtype=np.float64) for e in self.edge_scores]
            if len(self.edge_scores) != len(self.node_scores) - 1:
                raise ParameterError("need one edge matrix per consecutive column pair")
            for t, e in enumerate(self.edge_scores, start=1):
                want = (self.rows(t - 1), self.rows(t))
                if e.shape != want:
                    raise ParameterError(f"edge matrix {t} has shape {e.shape}, expected {want}")

    @property
    def T(self) -> int:
        return len(self.node_scores)

    def rows(self, t: int) -> int:
        return self.node_scores[t].size

    def edges(self, t, start, stop):
        if self.edge_scores is not None:
            return self.edge_scores[t - 1][:, start:stop]
        return self.edge_block(t, start, stop)


def viterbi_chain(problem: ChainProblem):
    """Max-sum decode. Returns ``(path, value)``; ties go to the lowest row.

    The value accumulates left to right: node 0, edge 1, node 1, edge 2, ...
    """
    delta = problem.node_scores[0]
    backptrs = []
    for t in range(1, problem.T):
        n_prev, n_cur = problem.rows(t - 1), problem.rows(t)
        step = max(1, _BLOCK_ENTRIES // n_prev)
        bp = np.empty(n_cur, dtype=np.intp)
        best = np.empty(n_cur)
        for start in range(0, n_cur, step):
            stop = min(n_cur, start + step)
            m = delta[:, None] + problem.edges(t, start, stop)
            arg = np.argmax(m, axis=0)
            bp[start:stop] = arg
            best[start:stop] = m[arg, np.arange(stop - start)]
        backptrs.append(bp)
        delta = best + problem.node_scores[t]
    last = int(np.argmax(delta))
    value = float(delta[last])
    path = [last]
    for bp in reversed(backptrs):
        path.append(int(bp[path[-1]]))
    path.reverse()
    return path, value


@dataclass(frozen=True)
class CostEstimate:
    comparisons: int
    T: int
    J: int
    L: int
    Ks: tuple[int, ...]

    def __str__(self):
        return f"{self.comparisons:,}"


def estimate_viterbi_cost(T: int, J: int, L: int, Ks) -> CostEstimate:
    """Lattice comparisons of the joint Viterbi: ``T * (J**L * prod(Ks))**2``."""
    Ks = tuple(int(k) for k in Ks)
    for name, v in (("T", T), ("J", J), ("L", L)):
        if int(v) != v or v < 1:
            raise ParameterError(f"{name} must be a positive integer, got {v}")
    if any(k < 1 for k in Ks):
        raise ParameterError("state counts must be positive")
    rows = int(J) ** int(L) * math.prod(Ks)
    return CostEstimate(int(T) * rows * rows, int(T), int(J), int(L), Ks)


def scenario_cost(scenario: ScenarioSpec) -> CostEstimate:
    J = max((scenario.pool_size(l) for l in range(scenario.L)), default=1)
    return estimate_viterbi_cost(scenario.T, J, max(scenario.L, 1),
                                 [w.states for w in scenario.words])


class _JointLattice:
    """Column ``t`` rows enumerate ``(j_1..j_L, k_1..k_W)`` in C order."""

    def __init__(self, scenario: ScenarioSpec, tables: ScoreTables):
        self.scenario = scenario
        self.tables = tables
        self.dims = [
            tuple(len(p) for p in scenario.pools[t]) + tuple(w.states for w in scenario.words)
            for t in range(scenario.T)
        ]

    def node_scores(self, t):
        s, tab = self.scenario, self.tables
        dims = self.dims[t]
        n = len(dims)
        total = np.zeros(dims)
        for l in range(s.L):
            total += _place(tab.f[t][l], (l,), n)
        for w, word in enumerate(s.words):
            axes = (s.L + w,) + tuple(word.theta)
            total += _place(tab.h[t][w], axes, n)
        return total.ravel()

    def factor_matrices(self, t):
        s, tab = self.scenario, self.tables
        return [tab.g[t][l] for l in range(s.L)] + [tab.a[w] for w in range(s.W)]

    def edge_block(self, t, start, stop):
        prev_dims, cur_dims = self.dims[t - 1], self.dims[t]
        cols = np.unravel_index(np.arange(start, stop), cur_dims)
        n = len(prev_dims)
        out = np.zeros(prev_dims + (stop - start,))
        for f, m in enumerate(self.factor_matrices(t)):
            shape = [1] * n + [stop - start]
            shape[f] = prev_dims[f]
            out += m[:, cols[f]].reshape(shape)
        return out.reshape(-1, stop - start)


def _place(arr, axes, n):
    """Broadcast ``arr`` (whose axis i belongs to lattice factor ``axes[i]``) to ``n`` dims."""
    order = np.argsort(axes)
    arr = np.transpose(arr, order)
    shape = [1] * n
    for k, i in enumerate(order):
        shape[axes[i]] = arr.shape[k]
    return arr.reshape(shape)


def viterbi_joint(scenario: ScenarioSpec, cap: int = JOINT_ROW_CAP,
                  tables: ScoreTables | None = None):
    """Global optimum of the sentence-tracker cost over the joint lattice.

    Returns ``(TrackCollection, value)``.  The value is the correctly rounded
    sum of the selected score-table entries, the same float produced by
    :func:`sentrack.hypergraph.labeling_value` on the sentence objective.
    Raises :class:`CapExceededError` when any column has more than ``cap``
    rows.
    """
    rows = max(scenario.joint_rows(t) for t in range(scenario.T))
    if rows > cap:
        est = scenario_cost(scenario)
        raise CapExceededError(
            f"intractable for Viterbi: {rows} joint rows exceed the cap of {cap}"
            f" (~{est} lattice comparisons)", est.comparisons)
    tables = tables or score_tables(scenario)
    lattice = _JointLattice(scenario, tables)
    problem = ChainProblem([lattice.node_scores(t) for t in range(scenario.T)],
                           edge_block=lattice.edge_block)
    path, _ = viterbi_chain(problem)
    L = scenario.L
    picks = [np.unravel_index(r, lattice.dims[t]) for t, r in enumerate(path)]
    tracks = []
    for l in range(L):
        tracks.append([scenario.frames[t].detections[scenario.pools[t][l][int(picks[t][l])]].id
                       for t in range(scenario.T)])
    states = [[int(picks[t][L + w]) for t in range(scenario.T)] for w in range(scenario.W)]
    return TrackCollection(tracks, states), joint_value(scenario, tables, picks)


def joint_value(scenario, tables, picks) -> float:
    L = scenario.L
    terms = []
    for l in range(L):
        for t in range(scenario.T):
            terms.append(tables.f[t][l][picks[t][l]])
            if t:
                terms.append(tables.g[t][l][picks[t - 1][l], picks[t][l]])
    for w, word in enumerate(scenario.words):
        for t in range(scenario.T):
            idx = (picks[t][L + w],) + tuple(picks[t][i] for i in word.theta)
            terms.append(tables.h[t][w][idx])
            if t:
                terms.append(tables.a[w][picks[t - 1][L + w], picks[t][L + w]])
    return math.fsum(float(x) for x in terms)
