"""Growth Transform local search over products of simplices, plus rounding.

The update multiplies every label variable by its partial derivative and
renormalizes each vertex block.  It increases a homogeneous polynomial with
nonnegative coefficients; an arbitrary objective is brought into that form
by two transformations that are never materialized here:

* padding lower-degree terms with full label sums (does not change values or
  gradients on the simplex), and
* adding a per-hyperedge constant ``C_e`` to every coefficient, which on the
  simplex adds ``sum(C_e for e containing u)`` to each partial derivative of
  vertex ``u``.

So one step only needs the raw gradient and ``ShiftConstants.per_vertex``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError
from .hypergraph import (
    LabelDistributions,
    PolynomialObjective,
    ShiftConstants,
    _check,
    labeling_value,
    shift_constants,
)

log = logging.getLogger(__name__)

ONE_HOT_TOL = 1e-9


@dataclass(frozen=True)
class GtSchedule:
    restarts: int = 150
    iters_per_restart: int = 300
    refine_iters: int = 5000
    epsilon: float = 0.01
    early_stop_rel_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.iters_per_restart < 1:
            raise ParameterError("restarts and iters_per_restart must be positive")
        if self.refine_iters < 0:
            raise ParameterError("refine_iters must be nonnegative")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if self.early_stop_rel_tol < 0:
            raise ParameterError("early_stop_rel_tol must be nonnegative")


@dataclass
class OptimizeTrace:
    """Objective values (original scale) recorded after every update."""

    values: list[float]
    dists: LabelDistributions
    restart_index: int = 0
    restart_values: list[float] = field(default_factory=list)
    flagged: set[int] = field(default_factory=set)

    @property
    def iterations(self) -> int:
        return len(self.values) - 1

    @property
    def final_value(self) -> float:
        return self.values[-1]

    def violations(self, rel_tol: float = 1e-9) -> list[int]:
        """Indices ``i`` where ``values[i + 1]`` dropped below ``values[i]``."""
        v = np.asarray(self.values)
        if v.size < 2:
            return []
        slack = rel_tol * np.maximum(1.0, np.abs(v[:-1]))
        return [int(i) for i in np.flatnonzero(v[1:] < v[:-1] - slack)]


def _entry_shift(objective: PolynomialObjective, constants: ShiftConstants) -> np.ndarray:
    if constants.per_vertex.shape != (objective.num_vertices,):
        raise ParameterError("shift constants were computed for a different objective")
    return constants.per_vertex[objective.entry_vertex]


def _step_flat(objective, flat, entry_shift, flagged):
    """One update on the flat vector; returns (new_flat, value_at_flat)."""
    grad, value = objective.gradient_flat(flat, with_value=True)
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        u = int(objective.entry_vertex[bad])
        raise NumericError(f"non-finite gradient at vertex {u}", vertex=u)
    mass = flat * (grad + entry_shift)
    np.maximum(mass, 0.0, out=mass)
    starts = objective.offsets[:-1]
    sums = np.add.reduceat(mass, starts)
    dead = sums <= 0.0
    if np.any(dead):
        # leave zero-mass blocks untouched
        dead_entries = dead[objective.entry_vertex]
        mass[dead_entries] = flat[dead_entries]
        sums[dead] = 1.0
        flagged.update(int(u) for u in np.flatnonzero(dead))
    new = mass / sums[objective.entry_vertex]
    return new, value


def gt_step(objective: PolynomialObjective, dists: LabelDistributions,
            constants: ShiftConstants) -> LabelDistributions:
    _check(objective, dists)
    flagged = set()
    new, _ = _step_flat(objective, dists.flat, _entry_shift(objective, constants), flagged)
    if flagged:
        log.warning("zero-mass vertex blocks left unchanged: %s", sorted(flagged))
    out = LabelDistributions(dists.vertex_set, new, validate=False)
    out.flagged = flagged
    return out


def _run(objective, flat, iters, entry_shift, early_stop_rel_tol, flagged):
    values = []
    for _ in range(iters):
        new, value = _step_flat(objective, flat, entry_shift, flagged)
        values.append(value)
        flat = new
        if early_stop_rel_tol > 0 and len(values) >= 2:
            prev, cur = values[-2], values[-1]
            if abs(cur - prev) < early_stop_rel_tol * max(abs(prev), 1e-300):
                break
    values.append(objective.value_flat(flat))
    return flat, values


def optimize(objective: PolynomialObjective, init: LabelDistributions, iters: int,
             constants: ShiftConstants | None = None,
             early_stop_rel_tol: float = 0.0) -> OptimizeTrace:
    """Apply ``iters`` updates starting at ``init``; ``values[0]`` is the start."""
    if iters < 0:
        raise ParameterError("iters must be nonnegative")
    _check(objective, init)
    if constants is None:
        constants = shift_constants(objective)
    flagged = set()
    flat, values = _run(objective, init.flat.copy(), iters, _entry_shift(objective, constants),
                        early_stop_rel_tol, flagged)
    dists = LabelDistributions(init.vertex_set, flat, validate=False)
    return OptimizeTrace(values, dists, flagged=flagged)


def restart_init(objective: PolynomialObjective, seed: int, restart: int) -> LabelDistributions:
    """Initial point for one restart; depends only on ``(seed, restart)``."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(restart,)))
    return LabelDistributions.random(objective.vertex_set, rng)


def optimize_with_restarts(objective: PolynomialObjective, schedule: GtSchedule = GtSchedule()):
    """Multi-start search: best of ``restarts`` short runs, then refinement.

    Returns ``(trace, dists)``.  The trace holds the winning restart's values
    followed by the refinement values; ``restart_values`` lists every
    restart's final objective.
    """
    constants = shift_constants(objective, schedule.epsilon)
    entry_shift = _entry_shift(objective, constants)
    best = None
    restart_values = []
    flagged = set()
    for r in range(schedule.restarts):
        init = restart_init(objective, schedule.seed, r)
        flat, values = _run(objective, init.flat, schedule.iters_per_restart, entry_shift,
                            schedule.early_stop_rel_tol, flagged)
        restart_values.append(values[-1])
        # strict comparison keeps the lowest restart index on ties
        if best is None or values[-1] > best[2][-1]:
            best = (r, flat, values)
    r, flat, values = best
    log.debug("restart %d selected with value %.6g", r, values[-1])
    flat, refine_values = _run(objective, flat, schedule.refine_iters, entry_shift,
                               schedule.early_stop_rel_tol, flagged)
    dists = LabelDistributions(objective.vertex_set, flat, validate=False)
    trace = OptimizeTrace(values + refine_values[1:], dists, restart_index=r,
                          restart_values=restart_values, flagged=flagged)
    return trace, dists


def round_solution(objective: PolynomialObjective, dists: LabelDistributions,
                   one_hot_tol: float = ONE_HOT_TOL):
    """Single greedy pass turning relaxed distributions into a labeling.

    Vertices that are already one-hot keep their label.  The rest are visited
    in ascending id order; each takes the label with the largest partial
    derivative given the current (partly fractional, partly rounded) state of
    every other vertex, which is the label maximizing the objective with the
    others held fixed since no hyperedge contains a vertex twice.  Returns
    ``(labeling, value)`` and never decreases the objective.
    """
    _check(objective, dists)
    flat = dists.flat.copy()
    off = objective.offsets
    labeling = [None] * objective.num_vertices
    pending = []
    for u in range(objective.num_vertices):
        block = flat[off[u]:off[u + 1]]
        top = int(np.argmax(block))
        if block[top] >= 1.0 - one_hot_tol:
            labeling[u] = top
            block[:] = 0.0
            block[top] = 1.0
        else:
            pending.append(u)
    for u in pending:
        g = objective.vertex_gradient(flat, u)
        label = int(np.argmax(g))
        block = flat[off[u]:off[u + 1]]
        block[:] = 0.0
        block[label] = 1.0
        labeling[u] = label
    return labeling, labeling_value(objective, labeling)
