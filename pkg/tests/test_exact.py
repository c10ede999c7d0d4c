import itertools

import numpy as np
import pytest

from conftest import random_scenario
from sentrack.errors import CapExceededError, ParameterError
from sentrack.exact import (
    ChainProblem,
    estimate_viterbi_cost,
    scenario_cost,
    viterbi_chain,
    viterbi_joint,
)
from sentrack.growth import GtSchedule, optimize_with_restarts, round_solution
from sentrack.hypergraph import brute_force_max
from sentrack.models import (
    build_sentence_objective,
    build_tracker_objective,
    score_discrete,
    tracks_to_labeling,
)


def enumerate_chain(nodes, edges):
    """Best path by enumeration, summing in the decoder's left-to-right order."""
    best, best_path = -np.inf, None
    for path in itertools.product(*(range(len(n)) for n in nodes)):
        v = nodes[0][path[0]]
        for t in range(1, len(nodes)):
            v = v + edges[t - 1][path[t - 1], path[t]]
            v = v + nodes[t][path[t]]
        if v > best:
            best, best_path = v, list(path)
    return best_path, float(best)


def random_chain(rng, T, max_rows=4):
    rows = [int(r) for r in rng.integers(1, max_rows + 1, size=T)]
    nodes = [rng.normal(size=r) for r in rows]
    edges = [rng.normal(size=(rows[t - 1], rows[t])) for t in range(1, T)]
    return nodes, edges


class TestChain:
    def test_single_column(self):
        path, value = viterbi_chain(ChainProblem([np.array([0.5, 2.0, -1.0])]))
        assert path == [1] and value == 2.0

    def test_hand_example(self):
        g = np.zeros((2, 2))
        g[0, 1] = -5.0
        path, value = viterbi_chain(ChainProblem([np.array([1.0, 0.0]), np.array([0.0, 2.0])], [g]))
        assert path == [1, 1] and value == 2.0

    def test_matches_enumeration(self, rng):
        for _ in range(100):
            nodes, edges = random_chain(rng, int(rng.integers(1, 6)))
            path, value = viterbi_chain(ChainProblem(nodes, edges))
            want_path, want = enumerate_chain(nodes, edges)
            assert value == want
            assert path == want_path

    def test_edge_block_equals_matrices(self, rng):
        nodes, edges = random_chain(rng, 5)
        block = ChainProblem(nodes, edge_block=lambda t, a, b: edges[t - 1][:, a:b])
        assert viterbi_chain(block) == viterbi_chain(ChainProblem(nodes, edges))

    def test_ties_lowest_row(self):
        nodes = [np.zeros(3), np.zeros(3)]
        edges = [np.zeros((3, 3))]
        assert viterbi_chain(ChainProblem(nodes, edges)) == ([0, 0], 0.0)

    def test_shape_errors(self):
        with pytest.raises(ParameterError):
            ChainProblem([])
        with pytest.raises(ParameterError):
            ChainProblem([np.zeros(2), np.zeros(3)], [np.zeros((3, 2))])
        with pytest.raises(ParameterError):
            ChainProblem([np.zeros(2), np.zeros(3)])


class TestJoint:
    def test_single_track_equals_tracker_chain(self, rng):
        for _ in range(10):
            sc = random_scenario(rng, T=5, J=4, L=1, W=0)
            tr = build_tracker_objective(sc, 0)
            nodes = [e.phi for e in tr.hyperedges if e.degree == 1]
            edges = [e.phi for e in tr.hyperedges if e.degree == 2]
            _, chain = viterbi_chain(ChainProblem(nodes, edges))
            _, joint = viterbi_joint(sc)
            assert joint == pytest.approx(chain, abs=1e-12)

    def test_equals_brute_force(self, rng):
        for _ in range(20):
            sc = random_scenario(rng, T=3, J=3, K=2, L=2, W=1)
            obj = build_sentence_objective(sc)
            tracks, value = viterbi_joint(sc)
            labels, best = brute_force_max(obj)
            assert value == best
            assert score_discrete(sc, tracks) == pytest.approx(value, rel=1e-12, abs=1e-12)

    def test_dominates_growth_transform(self, rng):
        sched = GtSchedule(restarts=3, iters_per_restart=30, refine_iters=30, seed=4)
        for _ in range(5):
            sc = random_scenario(rng, T=4, J=3, K=2, L=2, W=2)
            obj = build_sentence_objective(sc)
            _, x = optimize_with_restarts(obj, sched)
            _, rounded = round_solution(obj, x)
            assert rounded <= viterbi_joint(sc)[1] + 1e-9

    def test_deterministic_ties(self, rng):
        sc = random_scenario(rng, T=4, J=3, L=2, W=1)
        a, va = viterbi_joint(sc)
        b, vb = viterbi_joint(sc)
        assert a == b and va == vb

    def test_cap_refusal(self, rng):
        sc = random_scenario(rng, T=3, J=3, K=3, L=2, W=2, fixed_sizes=True)
        with pytest.raises(CapExceededError, match="intractable for Viterbi") as info:
            viterbi_joint(sc, cap=10)
        assert info.value.count == scenario_cost(sc).comparisons

    def test_labeling_round_trip(self, rng):
        sc = random_scenario(rng, T=3, J=3, K=2, L=2, W=2)
        tracks, _ = viterbi_joint(sc)
        assert brute_force_max(build_sentence_objective(sc))[0] == tracks_to_labeling(sc, tracks)


class TestCost:
    def test_reference_value(self):
        est = estimate_viterbi_cost(15, 120, 4, [3])
        assert est.comparisons == 5_804_752_896_000_000_000
        assert str(est) == "5,804,752,896,000,000,000"

    def test_single_detection(self):
        assert estimate_viterbi_cost(7, 1, 1, []).comparisons == 7

    def test_big_integers(self):
        est = estimate_viterbi_cost(12, 30, 5, [3, 3])
        assert est.comparisons == 12 * (30**5 * 9) ** 2
        assert isinstance(est.comparisons, int)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            estimate_viterbi_cost(0, 1, 1, [])
        with pytest.raises(ParameterError):
            estimate_viterbi_cost(2, 3, 1, [0])
