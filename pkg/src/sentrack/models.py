"""Detection streams, word HMMs, and the tracking objectives built from them.

Four cost functions share one scoring vocabulary:

* ``f(b)``: detection score,
* ``g(b', b)``: motion coherence between detections in consecutive frames,
* ``h_w(k, b...)``: output score of word ``w`` in state ``k`` given the
  detections of the participants it is linked to,
* ``a_w(k', k)``: log transition score of word ``w``.

The single-track tracker, the HMM MAP decode, the event tracker and the full
sentence tracker are emitted as :class:`PolynomialObjective` instances whose
value at one-hot distributions is the corresponding discrete cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BuildError, ParameterError
from .hypergraph import Hyperedge, LabelDistributions, PolynomialObjective

# kind -> (allowed detection counts, parameter count)
PRIMITIVES = {
    "CONST": ((1, 2), 1),
    "LEFT_OF": ((2,), 1),
    "RIGHT_OF": ((2,), 1),
    "DIST_BAND": ((2,), 3),
    "APPROACHING": ((2,), 1),
    "DEPARTING": ((2,), 1),
    "SPEED_BAND": ((1,), 3),
}


@dataclass(frozen=True)
class Detection:
    id: int
    cls: str
    x: float
    y: float
    w: float
    h: float
    vx: float = 0.0
    vy: float = 0.0
    score: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h, self.vx, self.vy, self.score)
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError(f"detection {self.id} has a non-finite field")
        if self.w <= 0 or self.h <= 0:
            raise ParameterError(f"detection {self.id} needs positive width and height")


@dataclass(frozen=True)
class Frame:
    detections: tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if not self.detections:
            raise ParameterError("a frame needs at least one detection")
        ids = [d.id for d in self.detections]
        if len(set(ids)) != len(ids):
            raise ParameterError(f"duplicate detection ids in frame: {ids}")

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.array([getattr(d, k) for d in self.detections], dtype=np.float64)
                for k in ("x", "y", "vx", "vy", "score")}


@dataclass(frozen=True)
class Participant:
    name: str
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))

    def accepts(self, det: Detection) -> bool:
        return not self.classes or det.cls in self.classes


@dataclass(frozen=True)
class PrimitiveSpec:
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind not in PRIMITIVES:
            raise ParameterError(f"unknown primitive kind {self.kind!r}")
        n = PRIMITIVES[self.kind][1]
        if len(self.params) != n:
            raise ParameterError(f"{self.kind} takes {n} parameter(s), got {len(self.params)}")
        if self.kind in ("LEFT_OF", "RIGHT_OF", "APPROACHING", "DEPARTING") and self.params[0] <= 0:
            raise ParameterError(f"{self.kind} scale must be positive")

    @property
    def arities(self) -> tuple[int, ...]:
        return PRIMITIVES[self.kind][0]


@dataclass(frozen=True)
class WordModel:
    name: str
    arity: int
    theta: tuple[int, ...]
    states: int
    log_transition: np.ndarray
    outputs: tuple[PrimitiveSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(int(i) for i in self.theta))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        a = np.array(self.log_transition, dtype=np.float64)
        a.flags.writeable = False
        object.__setattr__(self, "log_transition", a)
        if self.arity not in (1, 2):
            raise ParameterError(f"word {self.name!r}: arity must be 1 or 2")
        if len(self.theta) != self.arity:
            raise ParameterError(
                f"word {self.name!r}: arity {self.arity} but theta has {len(self.theta)} entries")
        if len(set(self.theta)) != len(self.theta):
            raise ParameterError(f"word {self.name!r}: duplicate participant in theta")
        if self.states < 1:
            raise ParameterError(f"word {self.name!r}: needs at least one state")
        if a.shape != (self.states, self.states):
            raise ParameterError(
                f"word {self.name!r}: transition matrix must be {self.states}x{self.states}")
        if not np.all(np.isfinite(a)):
            raise ParameterError(f"word {self.name!r}: non-finite transition score")
        if len(self.outputs) != self.states:
            raise ParameterError(f"word {self.name!r}: needs one output primitive per state")
        for k, spec in enumerate(self.outputs):
            if self.arity not in spec.arities:
                raise ParameterError(
                    f"word {self.name!r}: state {k} primitive {spec.kind} cannot take"
                    f" {self.arity} detection(s)")

    def __eq__(self, other):
        if not isinstance(other, WordModel):
            return NotImplemented
        return (self.name, self.arity, self.theta, self.states, self.outputs) == (
            other.name, other.arity, other.theta, other.states, other.outputs
        ) and np.array_equal(self.log_transition, other.log_transition)

    __hash__ = None


@dataclass(frozen=True)
class ScenarioSpec:
    frames: tuple[Frame, ...]
    participants: tuple[Participant, ...]
    words: tuple[WordModel, ...] = ()
    coherence_sigma: float = 1.0

    def __post_init__(self):
        for name in ("frames", "participants", "words"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.frames) < 2:
            raise BuildError("a scenario needs at least two frames")
        if not self.coherence_sigma > 0:
            raise BuildError("coherence_sigma must be positive")
        if not self.participants:
            raise BuildError("a scenario needs at least one participant")
        names = [p.name for p in self.participants]
        if len(set(names)) != len(names):
            raise BuildError(f"duplicate participant names: {names}")
        for word in self.words:
            for i in word.theta:
                if not 0 <= i < len(self.participants):
                    raise BuildError(
                        f"word {word.name!r}: theta index {i} out of range for"
                        f" {len(self.participants)} participants")
        for l, p in enumerate(self.participants):
            for t in range(len(self.frames)):
                if not self.pools[t][l]:
                    raise BuildError(f"participant {p.name!r} has no candidate detections in frame {t}")

    @property
    def T(self) -> int:
        return len(self.frames)

    @property
    def L(self) -> int:
        return len(self.participants)

    @property
    def W(self) -> int:
        return len(self.words)

    @cached_property
    def pools(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        """``pools[t][l]``: indices into ``frames[t].detections`` usable by participant ``l``."""
        return tuple(
            tuple(tuple(j for j, d in enumerate(frame.detections) if p.accepts(d))
                  for p in self.participants)
            for frame in self.frames
        )

    def pool_size(self, l: int) -> int:
        return max(len(self.pools[t][l]) for t in range(self.T))

    def joint_rows(self, t: int) -> int:
        """Rows of the joint detection-by-state lattice column ``t``."""
        return math.prod(len(p) for p in self.pools[t]) * math.prod(w.states for w in self.words)

    def detection(self, t: int, det_id: int) -> Detection:
        for d in self.frames[t].detections:
            if d.id == det_id:
                return d
        raise IndexError(f"frame {t} has no detection with id {det_id}")


@dataclass(frozen=True)
class TrackCollection:
    """``tracks[l][t]`` is a detection id; ``states[w][t]`` a 0-based state index."""

    tracks: tuple[tuple[int, ...], ...]
    states: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(tuple(int(j) for j in tr) for tr in self.tracks))
        object.__setattr__(self, "states", tuple(tuple(int(k) for k in s) for s in self.states))

    def to_dict(self):
        return {"tracks": [list(tr) for tr in self.tracks],
                "states": [list(s) for s in self.states]}


# ---------------------------------------------------------------- scoring

def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _band_penalty(d, lo, hi, lam):
    return -lam * np.maximum(0.0, np.maximum(lo - d, d - hi))


def motion_coherence(prev: Detection, cur: Detection, sigma: float) -> float:
    """Negative squared miss of the flow-predicted position, over ``sigma**2``."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    dx = prev.x + prev.vx - cur.x
    dy = prev.y + prev.vy - cur.y
    return -(dx * dx + dy * dy) / (sigma * sigma)


def _coherence_matrix(prev: Frame, cur: Frame, sigma: float) -> np.ndarray:
    a, b = prev.arrays, cur.arrays
    dx = (a["x"] + a["vx"])[:, None] - b["x"][None, :]
    dy = (a["y"] + a["vy"])[:, None] - b["y"][None, :]
    return -(dx * dx + dy * dy) / (sigma * sigma)


def _primitive(spec: PrimitiveSpec, dets):
    """Primitive score over attribute mappings; broadcasts over arrays."""
    p = spec.params
    kind = spec.kind
    if kind == "CONST":
        shape = np.broadcast(*(d["x"] for d in dets)).shape
        return np.full(shape, p[0]) if shape else p[0]
    if kind == "SPEED_BAND":
        (b,) = dets
        return _band_penalty(np.hypot(b["vx"], b["vy"]), p[0], p[1], p[2])
    b1, b2 = dets
    if kind == "LEFT_OF":
        return _log_sigmoid((b2["x"] - b1["x"]) / p[0])
    if kind == "RIGHT_OF":
        return _log_sigmoid((b1["x"] - b2["x"]) / p[0])
    if kind == "DIST_BAND":
        d = np.hypot(b2["x"] - b1["x"], b2["y"] - b1["y"])
        return _band_penalty(d, p[0], p[1], p[2])
    now = np.hypot(b2["x"] - b1["x"], b2["y"] - b1["y"])
    nxt = np.hypot(b2["x"] + b2["vx"] - b1["x"] - b1["vx"],
                   b2["y"] + b2["vy"] - b1["y"] - b1["vy"])
    if kind == "APPROACHING":
        return _log_sigmoid((now - nxt) / p[0])
    return _log_sigmoid((nxt - now) / p[0])  # DEPARTING


def primitive_score(spec: PrimitiveSpec, *detections: Detection) -> float:
    if len(detections) not in spec.arities:
        raise ParameterError(
            f"{spec.kind} takes {' or '.join(map(str, spec.arities))} detection(s),"
            f" got {len(detections)}")
    dets = [{"x": d.x, "y": d.y, "vx": d.vx, "vy": d.vy} for d in detections]
    return float(_primitive(spec, dets))


@dataclass
class ScoreTables:
    """Every f, g, h, a value of a scenario, indexed by pool position.

    ``f[t][l]`` has shape ``(J_tl,)``; ``g[t][l]`` (for ``t >= 1``) shape
    ``(J_{t-1,l}, J_tl)``; ``h[t][w]`` shape ``(K_w, J_t,theta1[, J_t,theta2])``;
    ``a[w]`` shape ``(K_w, K_w)``.
    """

    f: list = field(default_factory=list)
    g: list = field(default_factory=list)
    h: list = field(default_factory=list)
    a: list = field(default_factory=list)


def _pool_arrays(frame: Frame, pool) -> dict[str, np.ndarray]:
    idx = np.asarray(pool, dtype=np.intp)
    return {k: v[idx] for k, v in frame.arrays.items()}


def _output_table(word: WordModel, pool_arrays) -> np.ndarray:
    """``(K, J1[, J2])`` table of output scores for one frame."""
    if word.arity == 1:
        dets = [pool_arrays[0]]
    else:
        a, b = pool_arrays
        dets = [{k: v[:, None] for k, v in a.items()}, {k: v[None, :] for k, v in b.items()}]
    shape = tuple(len(p["x"]) for p in pool_arrays)
    out = np.empty((word.states,) + shape)
    for k, spec in enumerate(word.outputs):
        out[k] = _primitive(spec, dets)
    return out


def score_tables(scenario: ScenarioSpec) -> ScoreTables:
    tables = ScoreTables()
    arrays = []
    for t, frame in enumerate(scenario.frames):
        per_l = [_pool_arrays(frame, scenario.pools[t][l]) for l in range(scenario.L)]
        arrays.append(per_l)
        tables.f.append([pa["score"].copy() for pa in per_l])
        if t == 0:
            tables.g.append(None)
        else:
            g_t = []
            full = _coherence_matrix(scenario.frames[t - 1], frame, scenario.coherence_sigma)
            for l in range(scenario.L):
                prev_pool = np.asarray(scenario.pools[t - 1][l], dtype=np.intp)
                pool = np.asarray(scenario.pools[t][l], dtype=np.intp)
                g_t.append(full[np.ix_(prev_pool, pool)])
            tables.g.append(g_t)
        tables.h.append([_output_table(w, [per_l[i] for i in w.theta]) for w in scenario.words])
    tables.a = [w.log_transition for w in scenario.words]
    return tables


# ---------------------------------------------------------------- objectives

@dataclass(frozen=True)
class SentenceLayout:
    """Vertex numbering of the sentence objective.

    Track vertex ``(t, l)`` is ``t * L + l``; state vertex ``(t, w)`` is
    ``T * L + t * W + w``.
    """

    T: int
    L: int
    W: int

    def track(self, t: int, l: int) -> int:
        return t * self.L + l

    def state(self, t: int, w: int) -> int:
        return self.T * self.L + t * self.W + w

    @property
    def num_vertices(self) -> int:
        return self.T * (self.L + self.W)


def build_sentence_objective(scenario: ScenarioSpec, tables: ScoreTables | None = None):
    """Relaxed sentence-tracker objective.

    Hyperedges, in order: ``L*T`` unary detection-score edges, ``L*(T-1)``
    pairwise coherence edges, one ``(I_w + 1)``-ary output edge per word and
    frame over ``(state, linked tracks...)``, and ``W*(T-1)`` pairwise
    transition edges.
    """
    tables = tables or score_tables(scenario)
    T, L, W = scenario.T, scenario.L, scenario.W
    lay = SentenceLayout(T, L, W)
    counts = [0] * lay.num_vertices
    for t in range(T):
        for l in range(L):
            counts[lay.track(t, l)] = len(scenario.pools[t][l])
        for w, word in enumerate(scenario.words):
            counts[lay.state(t, w)] = word.states
    edges = []
    for l in range(L):
        for t in range(T):
            edges.append(Hyperedge((lay.track(t, l),), tables.f[t][l]))
    for l in range(L):
        for t in range(1, T):
            edges.append(Hyperedge((lay.track(t - 1, l), lay.track(t, l)), tables.g[t][l]))
    for w, word in enumerate(scenario.words):
        for t in range(T):
            verts = (lay.state(t, w),) + tuple(lay.track(t, i) for i in word.theta)
            edges.append(Hyperedge(verts, tables.h[t][w]))
    for w in range(W):
        for t in range(1, T):
            edges.append(Hyperedge((lay.state(t - 1, w), lay.state(t, w)), tables.a[w]))
    return PolynomialObjective(counts, edges)


def build_tracker_objective(scenario: ScenarioSpec, participant_index: int):
    """Single-track objective: one vertex per frame over the participant's pool."""
    l = participant_index
    if not 0 <= l < scenario.L:
        raise BuildError(f"participant index {l} out of range")
    for t in range(scenario.T):
        if not scenario.pools[t][l]:
            raise BuildError(
                f"participant {scenario.participants[l].name!r} has no candidates in frame {t}")
    tables = score_tables(scenario)
    counts = [len(scenario.pools[t][l]) for t in range(scenario.T)]
    edges = [Hyperedge((t,), tables.f[t][l]) for t in range(scenario.T)]
    edges += [Hyperedge((t - 1, t), tables.g[t][l]) for t in range(1, scenario.T)]
    return PolynomialObjective(counts, edges)


def build_map_objective(word: WordModel, fixed_track):
    """HMM MAP decode along a fixed track.

    ``fixed_track[t]`` is the detection (arity 1) or tuple of detections
    (arity 2) fed to the word's output model in frame ``t``.
    """
    per_frame = []
    for t, item in enumerate(fixed_track):
        dets = (item,) if isinstance(item, Detection) else tuple(item)
        if len(dets) != word.arity:
            raise BuildError(
                f"frame {t}: word {word.name!r} has arity {word.arity}, got {len(dets)} detection(s)")
        per_frame.append(dets)
    T = len(per_frame)
    if T < 1:
        raise BuildError("fixed track is empty")
    edges = []
    for t, dets in enumerate(per_frame):
        edges.append(Hyperedge((t,), [primitive_score(o, *dets) for o in word.outputs]))
    edges += [Hyperedge((t - 1, t), word.log_transition) for t in range(1, T)]
    return PolynomialObjective([word.states] * T, edges)


def build_event_objective(scenario: ScenarioSpec):
    """Joint single-track and single-word objective (one participant, one unary word)."""
    if scenario.L != 1 or scenario.W != 1 or scenario.words[0].arity != 1:
        raise BuildError("the event objective needs exactly one participant and one unary word")
    return build_sentence_objective(scenario)


# ---------------------------------------------------------------- discrete side

def _check_tracks(scenario: ScenarioSpec, tracks: TrackCollection):
    if len(tracks.tracks) != scenario.L or len(tracks.states) != scenario.W:
        raise IndexError("track collection does not match the scenario's participants and words")
    for seq in tracks.tracks + tracks.states:
        if len(seq) != scenario.T:
            raise IndexError(f"expected {scenario.T} frames per sequence, got {len(seq)}")
    for w, word in enumerate(scenario.words):
        for k in tracks.states[w]:
            if not 0 <= k < word.states:
                raise IndexError(f"word {word.name!r}: state {k} out of range")


def score_discrete(scenario: ScenarioSpec, tracks: TrackCollection) -> float:
    """Sentence-tracker cost of a discrete assignment, summed term by term."""
    _check_tracks(scenario, tracks)
    chosen = []
    for l, p in enumerate(scenario.participants):
        row = []
        for t in range(scenario.T):
            det = scenario.detection(t, tracks.tracks[l][t])
            if not p.accepts(det):
                raise IndexError(f"detection {det.id} in frame {t} is not a candidate for {p.name!r}")
            row.append(det)
        chosen.append(row)
    terms = []
    for row in chosen:
        terms += [d.score for d in row]
        terms += [motion_coherence(row[t - 1], row[t], scenario.coherence_sigma)
                  for t in range(1, scenario.T)]
    for w, word in enumerate(scenario.words):
        ks = tracks.states[w]
        for t in range(scenario.T):
            dets = [chosen[i][t] for i in word.theta]
            terms.append(primitive_score(word.outputs[ks[t]], *dets))
        terms += [float(word.log_transition[ks[t - 1], ks[t]]) for t in range(1, scenario.T)]
    return math.fsum(terms)


def extract_tracks(scenario: ScenarioSpec, labeling) -> TrackCollection:
    """Map a sentence-objective labeling back to detection ids and states."""
    lay = SentenceLayout(scenario.T, scenario.L, scenario.W)
    if len(labeling) != lay.num_vertices:
        raise BuildError(
            f"labeling has {len(labeling)} entries; the scenario has {lay.num_vertices} vertices")
    tracks = []
    for l in range(scenario.L):
        row = []
        for t in range(scenario.T):
            pool = scenario.pools[t][l]
            label = int(labeling[lay.track(t, l)])
            if not 0 <= label < len(pool):
                raise BuildError(f"label {label} out of range at frame {t}, participant {l}")
            row.append(scenario.frames[t].detections[pool[label]].id)
        tracks.append(row)
    states = []
    for w, word in enumerate(scenario.words):
        row = [int(labeling[lay.state(t, w)]) for t in range(scenario.T)]
        if any(not 0 <= k < word.states for k in row):
            raise BuildError(f"state label out of range for word {word.name!r}")
        states.append(row)
    return TrackCollection(tracks, states)


def tracks_to_labeling(scenario: ScenarioSpec, tracks: TrackCollection) -> list[int]:
    """Inverse of :func:`extract_tracks`."""
    _check_tracks(scenario, tracks)
    lay = SentenceLayout(scenario.T, scenario.L, scenario.W)
    labeling = [0] * lay.num_vertices
    for l in range(scenario.L):
        for t in range(scenario.T):
            frame = scenario.frames[t]
            pos = {frame.detections[j].id: i for i, j in enumerate(scenario.pools[t][l])}
            det_id = tracks.tracks[l][t]
            if det_id not in pos:
                raise IndexError(f"detection {det_id} is not a candidate at frame {t}")
            labeling[lay.track(t, l)] = pos[det_id]
    for w in range(scenario.W):
        for t in range(scenario.T):
            labeling[lay.state(t, w)] = tracks.states[w][t]
    return labeling


def tracks_to_dists(scenario: ScenarioSpec, objective: PolynomialObjective,
                    tracks: TrackCollection) -> LabelDistributions:
    return LabelDistributions.one_hot(objective.vertex_set, tracks_to_labeling(scenario, tracks))
