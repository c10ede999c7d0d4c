"""Joint multi-object tracking and sentence scoring by Growth Transform local search."""
from .compare import SolveReport, compare_run, relative_error
from .exact import ChainProblem, estimate_viterbi_cost, viterbi_chain, viterbi_joint
from .generate import GeneratorConfig, generate_scenario
from .growth import GtSchedule, OptimizeTrace, gt_step, optimize, optimize_with_restarts, round_solution
from .hypergraph import (
    Hyperedge,
    LabelDistributions,
    PolynomialObjective,
    VertexSet,
    brute_force_max,
    evaluate,
    gradient,
    homogenize,
    labeling_value,
    shift_constants,
)
from .models import (
    Detection,
    Frame,
    Participant,
    PrimitiveSpec,
    ScenarioSpec,
    TrackCollection,
    WordModel,
    build_event_objective,
    build_map_objective,
    build_sentence_objective,
    build_tracker_objective,
    extract_tracks,
    motion_coherence,
    primitive_score,
    score_discrete,
)
from .scenario_io import dump_scenario, parse_scenario

__version__ = "0.1.0"
