"""Simplex-constrained multilinear polynomials over hypergraph labelings.

An objective is a sum over hyperedges; each hyperedge couples a tuple of
distinct vertices through a dense compatibility tensor ``phi``.  With one
label distribution per vertex the objective value is the sum of the
expectations of every ``phi`` under the product of its vertices'
distributions.  At one-hot distributions this is the plain sum of the
selected tensor entries.

Distributions are stored as one flat vector (``LabelDistributions.flat``)
with per-vertex offsets; hyperedges sharing a tensor shape are stacked so
that evaluation and gradients run as a handful of batched contractions.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, ParameterError, ShapeError

BRUTE_FORCE_CAP = 10**6
SIMPLEX_TOL = 1e-9

_AXES = string.ascii_lowercase


@dataclass(frozen=True)
class VertexSet:
    label_counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.label_counts)
        if not counts:
            raise ParameterError("a vertex set needs at least one vertex")
        if min(counts) < 1:
            raise ParameterError("every vertex needs at least one label")
        object.__setattr__(self, "label_counts", counts)

    @property
    def count(self) -> int:
        return len(self.label_counts)

    def label_count(self, u: int) -> int:
        return self.label_counts[u]

    @property
    def size(self) -> int:
        """Total number of label variables, the length of the flat vector."""
        return sum(self.label_counts)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.label_counts)]).astype(np.intp)


class Hyperedge:
    """Compatibility tensor over an ordered tuple of distinct vertices."""

    __slots__ = ("vertices", "phi")

    def __init__(self, vertices, phi):
        vertices = tuple(int(v) for v in vertices)
        phi = np.array(phi, dtype=np.float64)
        if not vertices:
            raise ParameterError("a hyperedge needs at least one vertex")
        if len(set(vertices)) != len(vertices):
            raise ParameterError(f"repeated vertex in hyperedge {vertices}")
        if phi.ndim != len(vertices):
            raise ShapeError(
                f"hyperedge {vertices} has a {phi.ndim}-d tensor, expected {len(vertices)}-d")
        if not np.all(np.isfinite(phi)):
            raise ParameterError(f"non-finite compatibility in hyperedge {vertices}")
        phi.flags.writeable = False
        self.vertices = vertices
        self.phi = phi

    @property
    def degree(self) -> int:
        return len(self.vertices)

    def __repr__(self):
        return f"Hyperedge(vertices={self.vertices}, shape={self.phi.shape})"


class _EdgeGroup:
    """Hyperedges with identical tensor shape, stacked along a leading axis."""

    def __init__(self, edge_ids, edges, offsets):
        self.edge_ids = np.asarray(edge_ids, dtype=np.intp)
        self.phi = np.stack([e.phi for e in edges])
        self.degree = edges[0].degree
        verts = np.array([e.vertices for e in edges], dtype=np.intp)
        self.vertices = verts
        self.index = []
        for axis, extent in enumerate(self.phi.shape[1:]):
            self.index.append(offsets[verts[:, axis]][:, None] + np.arange(extent))
        n = self.degree
        letters = _AXES[:n]
        operands = ",".join("Z" + a for a in letters)
        self._value_expr = f"Z{letters},{operands}->Z"
        self._grad_expr = []
        for axis in range(n):
            others = ",".join("Z" + letters[i] for i in range(n) if i != axis)
            expr = f"Z{letters}"
            if others:
                expr += "," + others
            self._grad_expr.append(expr + f"->Z{letters[axis]}")

    def gather(self, flat):
        return [flat[idx] for idx in self.index]

    def values(self, xs):
        return np.einsum(self._value_expr, self.phi, *xs)

    def gradients(self, xs):
        """Per-axis partial derivatives, each of shape ``(E, d_axis)``."""
        phi = self.phi
        if self.degree == 1:
            return [phi]
        if self.degree == 2:
            # batched matmul is markedly faster than einsum for pairwise terms
            return [np.matmul(phi, xs[1][:, :, None])[:, :, 0],
                    np.matmul(xs[0][:, None, :], phi)[:, 0, :]]
        if self.degree == 3:
            e, a, b, c = phi.shape
            g0 = np.matmul(phi.reshape(e, a * b, c), xs[2][:, :, None]).reshape(e, a, b)
            g0 = np.matmul(g0, xs[1][:, :, None])[:, :, 0]
            # axes 1 and 2 share the contraction with axis 0
            t = np.matmul(xs[0][:, None, :], phi.reshape(e, a, b * c)).reshape(e, b, c)
            g1 = np.matmul(t, xs[2][:, :, None])[:, :, 0]
            g2 = np.matmul(xs[1][:, None, :], t)[:, 0, :]
            return [g0, g1, g2]
        out = []
        for axis in range(self.degree):
            others = [xs[i] for i in range(self.degree) if i != axis]
            out.append(np.einsum(self._grad_expr[axis], phi, *others))
        return out


class PolynomialObjective:
    """Sum of hyperedge compatibilities; immutable once built."""

    def __init__(self, label_counts, hyperedges):
        self.vertex_set = (label_counts if isinstance(label_counts, VertexSet)
                           else VertexSet(tuple(label_counts)))
        self.hyperedges = tuple(hyperedges)
        counts = self.vertex_set.label_counts
        for e in self.hyperedges:
            for axis, v in enumerate(e.vertices):
                if not 0 <= v < len(counts):
                    raise ParameterError(f"hyperedge {e.vertices} references unknown vertex {v}")
                if e.phi.shape[axis] != counts[v]:
                    raise ShapeError(
                        f"hyperedge {e.vertices}: axis {axis} has extent {e.phi.shape[axis]},"
                        f" vertex {v} has {counts[v]} labels")
        self.max_degree = max((e.degree for e in self.hyperedges), default=0)
        self.offsets = self.vertex_set.offsets
        self.size = int(self.offsets[-1])
        # owner vertex of every flat entry
        self.entry_vertex = np.repeat(np.arange(len(counts)), counts)
        self.incident = [[] for _ in counts]
        for i, e in enumerate(self.hyperedges):
            for v in e.vertices:
                self.incident[v].append(i)
        buckets = {}
        for i, e in enumerate(self.hyperedges):
            buckets.setdefault(e.phi.shape, []).append(i)
        self._groups = [
            _EdgeGroup(ids, [self.hyperedges[i] for i in ids], self.offsets)
            for ids in buckets.values()
        ]

    @property
    def num_vertices(self) -> int:
        return self.vertex_set.count

    @property
    def label_counts(self) -> tuple[int, ...]:
        return self.vertex_set.label_counts

    @property
    def nbytes(self) -> int:
        return sum(g.phi.nbytes for g in self._groups)

    def degree_histogram(self) -> dict[int, int]:
        hist = {}
        for e in self.hyperedges:
            hist[e.degree] = hist.get(e.degree, 0) + 1
        return hist

    def value_flat(self, flat: np.ndarray) -> float:
        total = 0.0
        for g in self._groups:
            total += float(np.sum(g.values(g.gather(flat))))
        return total

    def gradient_flat(self, flat: np.ndarray, with_value: bool = False):
        grad = np.zeros(self.size)
        value = 0.0
        for g in self._groups:
            xs = g.gather(flat)
            for axis, ga in enumerate(g.gradients(xs)):
                if with_value and axis == 0:
                    value += float(np.sum(ga * xs[0]))
                grad += np.bincount(g.index[axis].ravel(), weights=ga.ravel(),
                                    minlength=self.size)
        if with_value:
            return grad, value
        return grad

    def vertex_gradient(self, flat: np.ndarray, u: int) -> np.ndarray:
        """Partial derivatives with respect to vertex ``u``'s labels only."""
        out = np.zeros(self.vertex_set.label_counts[u])
        for i in self.incident[u]:
            e = self.hyperedges[i]
            axis = e.vertices.index(u)
            t = e.phi
            # contract trailing axes first so remaining axis numbers stay valid
            for ax in range(e.degree - 1, -1, -1):
                if ax == axis:
                    continue
                v = e.vertices[ax]
                x = flat[self.offsets[v]:self.offsets[v + 1]]
                t = np.tensordot(t, x, axes=([ax], [0]))
            out += t
        return out


class LabelDistributions:
    """One nonnegative sum-to-one vector per vertex, stored contiguously."""

    def __init__(self, vertex_set: VertexSet, flat, validate: bool = True):
        self.vertex_set = vertex_set
        self.offsets = vertex_set.offsets
        self.flat = np.array(flat, dtype=np.float64)
        if self.flat.shape != (vertex_set.size,):
            raise ShapeError(
                f"expected {vertex_set.size} label variables, got shape {self.flat.shape}")
        if validate:
            self.validate()

    @classmethod
    def from_blocks(cls, vertex_set, blocks, validate=True):
        if not isinstance(vertex_set, VertexSet):
            vertex_set = VertexSet(tuple(vertex_set))
        blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
        if len(blocks) != vertex_set.count:
            raise ShapeError(f"expected {vertex_set.count} vertex blocks, got {len(blocks)}")
        for u, b in enumerate(blocks):
            if b.shape != (vertex_set.label_counts[u],):
                raise ShapeError(
                    f"vertex {u}: expected {vertex_set.label_counts[u]} labels, got {b.shape}")
        return cls(vertex_set, np.concatenate(blocks), validate=validate)

    @classmethod
    def uniform(cls, vertex_set):
        counts = np.asarray(vertex_set.label_counts, dtype=np.float64)
        return cls(vertex_set, np.repeat(1.0 / counts, vertex_set.label_counts))

    @classmethod
    def one_hot(cls, vertex_set, labeling):
        labeling = list(labeling)
        if len(labeling) != vertex_set.count:
            raise ShapeError(f"labeling has {len(labeling)} entries for {vertex_set.count} vertices")
        flat = np.zeros(vertex_set.size)
        offsets = vertex_set.offsets
        for u, label in enumerate(labeling):
            if not 0 <= label < vertex_set.label_counts[u]:
                raise ShapeError(f"vertex {u}: label {label} out of range")
            flat[offsets[u] + label] = 1.0
        return cls(vertex_set, flat, validate=False)

    @classmethod
    def random(cls, vertex_set, rng):
        """Strictly positive random point: i.i.d. uniform (0, 1] entries, normalized."""
        raw = 1.0 - rng.random(vertex_set.size)
        sums = np.add.reduceat(raw, vertex_set.offsets[:-1])
        return cls(vertex_set, raw / np.repeat(sums, vertex_set.label_counts), validate=False)

    def __len__(self):
        return self.vertex_set.count

    def __getitem__(self, u):
        return self.flat[self.offsets[u]:self.offsets[u + 1]]

    def blocks(self):
        return [self[u] for u in range(len(self))]

    def copy(self):
        return LabelDistributions(self.vertex_set, self.flat.copy(), validate=False)

    def validate(self, tol=SIMPLEX_TOL):
        if np.any(~np.isfinite(self.flat)) or np.any(self.flat < 0):
            bad = int(np.flatnonzero(~(self.flat >= 0))[0])
            u = int(np.searchsorted(self.offsets, bad, side="right") - 1)
            raise ShapeError(f"vertex {u} has a negative or non-finite entry")
        sums = np.add.reduceat(self.flat, self.offsets[:-1])
        off = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if off.size:
            raise ShapeError(f"vertex {int(off[0])} sums to {sums[off[0]]!r}, not 1")

    def argmax_labels(self):
        return [int(np.argmax(self[u])) for u in range(len(self))]


def _check(objective, dists):
    if dists.vertex_set.label_counts != objective.vertex_set.label_counts:
        raise ShapeError("label distributions do not match the objective's vertex set")


def evaluate(objective: PolynomialObjective, dists: LabelDistributions) -> float:
    """Exact multilinear value of the objective at ``dists``."""
    _check(objective, dists)
    return objective.value_flat(dists.flat)


def gradient(objective: PolynomialObjective, dists: LabelDistributions) -> list[np.ndarray]:
    """Partial derivatives per vertex and label, as a list of per-vertex arrays."""
    _check(objective, dists)
    grad = objective.gradient_flat(dists.flat)
    off = objective.offsets
    return [grad[off[u]:off[u + 1]] for u in range(objective.num_vertices)]


def labeling_value(objective: PolynomialObjective, labeling) -> float:
    """Sum of the selected tensor entries, correctly rounded (``math.fsum``).

    Using an exactly rounded sum makes the result depend only on the multiset
    of selected entries, so any other routine summing the same entries in any
    order with ``fsum`` gets the identical float.
    """
    labeling = [int(v) for v in labeling]
    if len(labeling) != objective.num_vertices:
        raise ShapeError(
            f"labeling has {len(labeling)} entries for {objective.num_vertices} vertices")
    for u, label in enumerate(labeling):
        if not 0 <= label < objective.label_counts[u]:
            raise ShapeError(f"vertex {u}: label {label} out of range")
    return math.fsum(
        float(e.phi[tuple(labeling[v] for v in e.vertices)]) for e in objective.hyperedges)


@dataclass(frozen=True)
class ShiftConstants:
    """Per-hyperedge offsets making every shifted coefficient positive.

    ``per_vertex[u]`` is the sum of the offsets of hyperedges containing ``u``;
    on the simplex it is exactly what the offsets add to every partial
    derivative of ``u``'s labels.
    """

    per_edge: np.ndarray
    total: float
    per_vertex: np.ndarray
    epsilon: float = field(default=0.01)


def shift_constants(objective: PolynomialObjective, epsilon: float = 0.01) -> ShiftConstants:
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    per_edge = np.array([max(epsilon, -float(e.phi.min())) for e in objective.hyperedges])
    per_vertex = np.zeros(objective.num_vertices)
    for c, e in zip(per_edge, objective.hyperedges):
        per_vertex[list(e.vertices)] += c
    for arr in (per_edge, per_vertex):
        arr.flags.writeable = False
    return ShiftConstants(per_edge, math.fsum(per_edge), per_vertex, float(epsilon))


def shifted_evaluate(objective, dists, constants: ShiftConstants) -> float:
    """Value of the shifted (nonnegative-coefficient) objective on the simplex."""
    return evaluate(objective, dists) + constants.total


def shifted_gradient(objective, dists, constants: ShiftConstants) -> list[np.ndarray]:
    return [g + constants.per_vertex[u] for u, g in enumerate(gradient(objective, dists))]


def homogenize(objective: PolynomialObjective, pad_labels: int = 2) -> PolynomialObjective:
    """Explicitly pad every lower-degree term up to the maximal degree.

    A degree-``m`` hyperedge is extended with ``N - m`` fresh free vertices
    (shared across hyperedges, each with ``pad_labels`` labels) and its tensor
    is broadcast along the new axes, i.e. the term is multiplied by the full
    label sum of every fresh vertex.  Original vertices keep their ids; the
    fresh ones are appended.  Test aid only; optimization never builds this.
    """
    n = objective.max_degree
    if n < 1:
        raise ParameterError("objective has no terms")
    pad = n - min(e.degree for e in objective.hyperedges)
    base = objective.num_vertices
    counts = objective.label_counts + (pad_labels,) * pad
    edges = []
    for e in objective.hyperedges:
        extra = n - e.degree
        if extra == 0:
            edges.append(e)
            continue
        phi = e.phi.reshape(e.phi.shape + (1,) * extra)
        phi = np.broadcast_to(phi, e.phi.shape + (pad_labels,) * extra)
        edges.append(Hyperedge(e.vertices + tuple(range(base, base + extra)), phi))
    return PolynomialObjective(counts, edges)


def brute_force_max(objective: PolynomialObjective, cap: int = BRUTE_FORCE_CAP):
    """Exhaustive maximization over every labeling.

    Returns ``(labeling, value)``; among equal scores the lexicographically
    smallest labeling wins.
    """
    counts = objective.label_counts
    n_configs = math.prod(counts)
    if n_configs > cap:
        raise CapExceededError(
            f"brute force over {n_configs} labelings exceeds the cap of {cap}", n_configs)
    total = np.zeros(counts)
    for e in objective.hyperedges:
        order = np.argsort(e.vertices)
        t = np.transpose(e.phi, order)
        shape = [1] * len(counts)
        for v in e.vertices:
            shape[v] = counts[v]
        total += t.reshape(shape)
    # argmax returns the first maximum of the C-ordered array, i.e. the
    # lexicographically smallest labeling
    flat_idx = int(np.argmax(total))
    labeling = [int(i) for i in np.unravel_index(flat_idx, counts)]
    return labeling, labeling_value(objective, labeling)
