"""Synthetic scenarios with planted ground-truth tracks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .models import Detection, Frame, Participant, PrimitiveSpec, ScenarioSpec, WordModel

WIDTH, HEIGHT = 640.0, 480.0
MAX_SPEED = 6.0
DISTRACTOR_SPREAD = 40.0  # px, about one object size
# px of positional error that costs one unit of score; shared by the detection
# score and the default coherence scale so both weigh position alike
SCORE_SCALE = 25.0


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for :func:`generate_scenario`.

    Participant ``l`` is an object of class ``l % classes``.  Each class gets
    its true objects plus ``distractor_count`` distractor boxes per frame;
    if ``detections_per_class`` is set it overrides ``distractor_count`` so
    that every class has exactly that many detections per frame.
    """

    T: int = 8
    L: int = 2
    W: int = 2
    detections_per_class: int | None = None
    classes: int | None = None
    noise_sigma: float = 2.0
    distractor_count: int = 4
    seed: int = 0
    states: int = 3
    coherence_sigma: float = SCORE_SCALE

    def __post_init__(self):
        if self.T < 2 or self.L < 1 or self.W < 0 or self.states < 1:
            raise ParameterError("need T >= 2, L >= 1, W >= 0, states >= 1")
        if self.noise_sigma < 0 or self.distractor_count < 0:
            raise ParameterError("noise_sigma and distractor_count must be nonnegative")
        if self.classes is not None and self.classes < 1:
            raise ParameterError("classes must be positive")
        if self.coherence_sigma <= 0:
            raise ParameterError("coherence_sigma must be positive")

    @property
    def n_classes(self) -> int:
        return self.classes if self.classes is not None else self.L

    def distractors_for(self, n_true: int) -> int:
        if self.detections_per_class is None:
            return self.distractor_count
        if self.detections_per_class < n_true:
            raise ParameterError(
                f"detections_per_class={self.detections_per_class} is below the {n_true}"
                " true objects of one class")
        return self.detections_per_class - n_true


def _trajectory(rng, T):
    pos = np.empty((T + 1, 2))
    pos[0] = rng.uniform([80.0, 80.0], [WIDTH - 80.0, HEIGHT - 80.0])
    vel = rng.uniform(-MAX_SPEED, MAX_SPEED, size=2)
    for t in range(1, T + 1):
        vel = np.clip(vel + rng.normal(0.0, 0.5, size=2), -MAX_SPEED, MAX_SPEED)
        pos[t] = pos[t - 1] + vel
    return pos


def _random_word(rng, index, L, K):
    arity = 2 if L >= 2 and rng.random() < 0.6 else 1
    theta = [int(i) for i in rng.choice(L, size=arity, replace=False)]
    stay = rng.uniform(0.5, 0.9)
    trans = np.full((K, K), (1.0 - stay) / max(K - 1, 1)) if K > 1 else np.ones((1, 1))
    if K > 1:
        np.fill_diagonal(trans, stay)
    outputs = []
    for _ in range(K):
        if arity == 1:
            if rng.random() < 0.7:
                lo = rng.uniform(0.0, 3.0)
                outputs.append(PrimitiveSpec("SPEED_BAND", (lo, lo + rng.uniform(1.0, 4.0), 0.5)))
            else:
                outputs.append(PrimitiveSpec("CONST", (-rng.uniform(0.0, 1.0),)))
            continue
        kind = rng.choice(["LEFT_OF", "RIGHT_OF", "DIST_BAND", "APPROACHING", "DEPARTING", "CONST"])
        if kind in ("LEFT_OF", "RIGHT_OF"):
            outputs.append(PrimitiveSpec(kind, (rng.uniform(20.0, 80.0),)))
        elif kind in ("APPROACHING", "DEPARTING"):
            outputs.append(PrimitiveSpec(kind, (rng.uniform(1.0, 4.0),)))
        elif kind == "DIST_BAND":
            lo = rng.uniform(0.0, 200.0)
            outputs.append(PrimitiveSpec(kind, (lo, lo + rng.uniform(50.0, 200.0), 0.01)))
        else:
            outputs.append(PrimitiveSpec("CONST", (-rng.uniform(0.0, 1.0),)))
    return WordModel(f"word{index}", arity, theta, K, np.log(trans), outputs)


def generate_scenario(config: GeneratorConfig) -> ScenarioSpec:
    """Plant ``L`` smooth tracks among distractor objects; deterministic per seed.

    True objects follow smooth trajectories and report their true next-step
    displacement as flow; their detections are jittered by ``noise_sigma``.
    Distractors are spurious boxes drawn afresh in every frame around a true
    object of their class (anywhere in the frame if the class has none).  A detection's score decreases with its
    distance to the nearest true object of its class, plus score noise
    proportional to ``noise_sigma``.
    """
    rng = np.random.default_rng(config.seed)
    T, L = config.T, config.L
    n_cls = config.n_classes
    class_names = [f"class{c}" for c in range(n_cls)]
    owners = [[l for l in range(L) if l % n_cls == c] for c in range(n_cls)]
    truth = [_trajectory(rng, T) for _ in range(L)]
    objects = []  # (class index, participant or None)
    for c in range(n_cls):
        objects += [(c, l) for l in owners[c]]
        objects += [(c, None)] * config.distractors_for(len(owners[c]))
    sizes = rng.uniform(20.0, 80.0, size=(len(objects), 2))
    frames = []
    for t in range(T):
        dets = []
        for i, (c, owner) in enumerate(objects):
            if owner is None and owners[c]:
                # spurious box near a true object of its class, drawn afresh every frame
                traj = truth[owners[c][int(rng.integers(len(owners[c])))]]
                pos = traj[t] + rng.normal(0.0, DISTRACTOR_SPREAD, size=2)
                flow = traj[t + 1] - traj[t] + rng.normal(0.0, 1.0, size=2)
            elif owner is None:
                pos = rng.uniform([0.0, 0.0], [WIDTH, HEIGHT])
                flow = rng.uniform(-MAX_SPEED, MAX_SPEED, size=2)
            else:
                traj = truth[owner]
                pos, flow = traj[t].copy(), traj[t + 1] - traj[t]
                if config.noise_sigma > 0:
                    pos += rng.normal(0.0, config.noise_sigma, size=2)
            true_here = [truth[l][t] for l in owners[c]]
            dist = min((float(np.hypot(*(pos - q))) for q in true_here), default=200.0)
            score = -min(dist / SCORE_SCALE, 4.0)
            if config.noise_sigma > 0:
                score += rng.normal(0.0, config.noise_sigma / 10.0)
            dets.append(Detection(id=i, cls=class_names[c], x=float(pos[0]), y=float(pos[1]),
                                  w=float(sizes[i, 0]), h=float(sizes[i, 1]),
                                  vx=float(flow[0]), vy=float(flow[1]), score=float(score)))
        frames.append(Frame(dets))
    participants = [Participant(f"p{l}", (class_names[l % n_cls],)) for l in range(L)]
    words = [_random_word(rng, w, L, config.states) for w in range(config.W)]
    return ScenarioSpec(frames, participants, words, config.coherence_sigma)


def planted_tracks(config: GeneratorConfig) -> list[list[int]]:
    """Detection ids of the true objects, per participant and frame."""
    ids, i = [None] * config.L, 0
    n_cls = config.n_classes
    for c in range(n_cls):
        owners = [l for l in range(config.L) if l % n_cls == c]
        for l in owners:
            ids[l] = i
            i += 1
        i += config.distractors_for(len(owners))
    return [[ids[l]] * config.T for l in range(config.L)]
