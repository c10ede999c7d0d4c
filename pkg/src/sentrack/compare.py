"""Batch comparison of Growth Transform results against the exact optimum."""
from __future__ import annotations

import logging
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .errors import CapExceededError, UndefinedError
from .exact import JOINT_ROW_CAP, scenario_cost, viterbi_joint
from .growth import GtSchedule, optimize_with_restarts, round_solution
from .models import ScenarioSpec, build_sentence_objective, extract_tracks, score_tables

log = logging.getLogger(__name__)

HIST_BINS = 21  # [0,1), [1,2), ..., [19,20), [20, inf)


def relative_error(exact: float, approx: float) -> float:
    """Percentage gap ``100 * |exact - approx| / |exact|``."""
    if exact == 0:
        raise UndefinedError("relative error is undefined for an exact value of 0")
    return 100.0 * abs(exact - approx) / abs(exact)


def histogram(errors) -> list[int]:
    bins = [0] * HIST_BINS
    for e in errors:
        bins[min(int(e), HIST_BINS - 1)] += 1
    return bins


@dataclass
class ScenarioRecord:
    name: str
    exact: float | None = None
    relaxed: float | None = None
    rounded: float | None = None
    rel_err_pct: float | None = None
    intractable: bool = False
    cost_estimate: int = 0
    iterations: int = 0
    seconds: float = 0.0
    tracks: dict | None = None
    error: str | None = None


@dataclass
class SolveReport:
    records: list[ScenarioRecord] = field(default_factory=list)

    @property
    def errors(self) -> list[float]:
        return [r.rel_err_pct for r in self.records if r.rel_err_pct is not None]

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.records)

    def aggregate(self) -> dict:
        errs = self.errors
        return {
            "count": len(self.records),
            "tractable": len(errs),
            "intractable": sum(r.intractable for r in self.records),
            "failed": sum(r.error is not None for r in self.records),
            "mean": statistics.fmean(errs) if errs else None,
            "median": statistics.median(errs) if errs else None,
            "max": max(errs) if errs else None,
            "bin_width_pct": 1,
            "bins": histogram(errs),
        }

    def to_dict(self, timing: bool = True) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            if not timing:
                d.pop("seconds")
            recs.append(d)
        return {"scenarios": recs, "aggregate": self.aggregate()}


def solve_one(name: str, scenario: ScenarioSpec, schedule: GtSchedule,
              cap: int = JOINT_ROW_CAP) -> ScenarioRecord:
    """Exact (when tractable) and GT solution of one scenario; never raises."""
    rec = ScenarioRecord(name)
    start = time.perf_counter()
    try:
        rec.cost_estimate = scenario_cost(scenario).comparisons
        tables = score_tables(scenario)
        try:
            _, rec.exact = viterbi_joint(scenario, cap=cap, tables=tables)
        except CapExceededError:
            rec.intractable = True
        objective = build_sentence_objective(scenario, tables)
        trace, dists = optimize_with_restarts(objective, schedule)
        labeling, rec.rounded = round_solution(objective, dists)
        rec.relaxed = trace.final_value
        rec.iterations = schedule.restarts * schedule.iters_per_restart + schedule.refine_iters
        rec.tracks = extract_tracks(scenario, labeling).to_dict()
        if rec.exact is not None:
            rec.rel_err_pct = relative_error(rec.exact, rec.rounded)
    except Exception as exc:  # one bad scenario must not abort the batch
        log.debug("scenario %s failed\n%s", name, traceback.format_exc())
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.seconds = time.perf_counter() - start
    return rec


def _solve_args(args):
    return solve_one(*args)


def compare_run(scenarios, schedule: GtSchedule = GtSchedule(), cap: int = JOINT_ROW_CAP,
                workers: int = 1) -> SolveReport:
    """Run every scenario; ``scenarios`` maps name -> ScenarioSpec (or is a list of pairs).

    Records come back sorted by name whatever the execution order.
    """
    items = sorted(dict(scenarios).items())
    jobs = [(name, sc, schedule, cap) for name, sc in items]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_solve_args, jobs))
    else:
        records = [_solve_args(j) for j in jobs]
    return SolveReport(sorted(records, key=lambda r: r.name))
