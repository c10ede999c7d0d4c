"""Command-line entry point: ``sentrack {track,compare,cost,gen}``.

Reports are JSON.  Exit status is 0 on success, 1 when any scenario fails
(or a requested exact solve is intractable), 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .compare import ScenarioRecord, SolveReport, compare_run
from .errors import CapExceededError, SentrackError
from .exact import JOINT_ROW_CAP, estimate_viterbi_cost, scenario_cost, viterbi_joint
from .generate import GeneratorConfig, generate_scenario
from .growth import GtSchedule, optimize_with_restarts, round_solution
from .models import build_sentence_objective, extract_tracks, score_tables
from .scenario_io import dump_scenario, load_scenario


def _emit(payload, out):
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _schedule(args) -> GtSchedule:
    return GtSchedule(restarts=args.restarts, iters_per_restart=args.iters,
                      refine_iters=args.refine, epsilon=args.epsilon, seed=args.seed)


def _add_schedule_flags(p):
    d = GtSchedule()
    p.add_argument("--restarts", type=int, default=d.restarts)
    p.add_argument("--iters", type=int, default=d.iters_per_restart,
                   help="iterations per restart")
    p.add_argument("--refine", type=int, default=d.refine_iters,
                   help="extra iterations on the best restart")
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--seed", type=int, default=d.seed)


def cmd_track(args) -> int:
    scenario = load_scenario(args.scenario)
    start = time.perf_counter()
    if args.solver == "viterbi":
        try:
            tracks, value = viterbi_joint(scenario, cap=args.cap)
        except CapExceededError as exc:
            _emit({"solver": "viterbi", "intractable": True, "error": str(exc),
                   "cost_estimate": exc.count}, args.out)
            return 1
        report = {"solver": "viterbi", "value": value, **tracks.to_dict()}
    else:
        objective = build_sentence_objective(scenario, score_tables(scenario))
        trace, dists = optimize_with_restarts(objective, _schedule(args))
        labeling, value = round_solution(objective, dists)
        report = {"solver": "gt", "value": value, "relaxed": trace.final_value,
                  "restart_index": trace.restart_index,
                  **extract_tracks(scenario, labeling).to_dict()}
    report["cost_estimate"] = scenario_cost(scenario).comparisons
    report["seconds"] = time.perf_counter() - start
    _emit(report, args.out)
    return 0


def cmd_compare(args) -> int:
    directory = Path(args.scenario_dir)
    if not directory.is_dir():
        raise SystemExit(f"error: {directory} is not a directory")
    scenarios, broken = {}, []
    for path in sorted(directory.glob("*.json")):
        try:
            scenarios[path.stem] = load_scenario(path)
        except (SentrackError, OSError) as exc:
            broken.append(ScenarioRecord(path.stem, error=f"{type(exc).__name__}: {exc}"))
    report = compare_run(scenarios, _schedule(args), cap=args.cap, workers=args.workers)
    report = SolveReport(sorted(report.records + broken, key=lambda r: r.name))
    _emit(report.to_dict(), args.out)
    return 1 if report.failed else 0


def cmd_cost(args) -> int:
    est = estimate_viterbi_cost(args.frames, args.detections, args.participants, args.states)
    _emit({"T": est.T, "J": est.J, "L": est.L, "Ks": list(est.Ks),
           "comparisons": est.comparisons, "formatted": str(est)}, args.out)
    return 0


def cmd_gen(args) -> int:
    config = GeneratorConfig(T=args.frames, L=args.participants, W=args.words,
                             detections_per_class=args.detections_per_class,
                             classes=args.classes, noise_sigma=args.noise_sigma,
                             distractor_count=args.distractors, seed=args.seed,
                             states=args.states, coherence_sigma=args.coherence_sigma)
    _emit(dump_scenario(generate_scenario(config)), args.out)
    return 0


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track one scenario")
    p.add_argument("scenario")
    p.add_argument("--solver", choices=("gt", "viterbi"), default="gt")
    _add_schedule_flags(p)
    p.add_argument("--cap", type=int, default=JOINT_ROW_CAP, help="joint-lattice row cap")
    p.add_argument("--out")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("compare", help="GT vs exact optimum over a directory of scenarios")
    p.add_argument("scenario_dir")
    _add_schedule_flags(p)
    p.add_argument("--cap", type=int, default=JOINT_ROW_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cost", help="joint-lattice Viterbi comparison count")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--detections", type=int, required=True)
    p.add_argument("--participants", type=int, required=True)
    p.add_argument("--states", type=_int_list, required=True, help="K1,K2,...")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("gen", help="write a synthetic scenario")
    d = GeneratorConfig()
    p.add_argument("--frames", type=int, default=d.T)
    p.add_argument("--participants", type=int, default=d.L)
    p.add_argument("--words", type=int, default=d.W)
    p.add_argument("--states", type=int, default=d.states)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--detections-per-class", type=int, default=None)
    p.add_argument("--distractors", type=int, default=d.distractor_count)
    p.add_argument("--noise-sigma", type=float, default=d.noise_sigma)
    p.add_argument("--coherence-sigma", type=float, default=d.coherence_sigma)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (SentrackError, OSError) as exc:
        # bad parameters or an invalid scenario file
        print(f"error: {exc}", file=sys.stderr)
        return 2 if args.command in ("cost", "gen") else 1


if __name__ == "__main__":
    sys.exit(main())
