"""Reading and writing scenario files.

A scenario file is JSON with this canonical layout (key order fixed)::

    {
      "frames": [
        {"detections": [
          {"id": 0, "class": "person", "x": 1.0, "y": 2.0, "w": 10.0, "h": 20.0,
           "vx": 0.5, "vy": 0.0, "score": -0.1},
          ...]},
        ...],
      "participants": [{"name": "person", "classes": ["person"]}, ...],
      "words": [
        {"name": "left_of", "arity": 2, "theta": [0, 1], "states": 1,
         "log_transition": [[0.0]],
         "outputs": [{"kind": "LEFT_OF", "params": [10.0]}]},
        ...],
      "coherence_sigma": 10.0
    }

``theta`` and state indices are 0-based.  :func:`dump_scenario` writes the
canonical text; ``dump_scenario(parse_scenario(text))`` is byte-stable.
"""
from __future__ import annotations

import json
import math

from .errors import ScenarioError, SentrackError
from .models import (
    PRIMITIVES,
    Detection,
    Frame,
    Participant,
    PrimitiveSpec,
    ScenarioSpec,
    WordModel,
)

DETECTION_FIELDS = ("id", "class", "x", "y", "w", "h", "vx", "vy", "score")


def _require(obj, key, where, kind):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    if key not in obj:
        raise ScenarioError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{where}.{key}: expected a number")
        if not math.isfinite(value):
            raise ScenarioError(f"{where}.{key}: must be finite")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"{where}.{key}: expected an integer")
        return value
    if not isinstance(value, kind):
        raise ScenarioError(f"{where}.{key}: expected {kind.__name__}")
    return value


def _unknown(obj, allowed, where):
    extra = set(obj) - set(allowed)
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(extra)}")


def _detection(obj, where):
    _unknown(obj, DETECTION_FIELDS, where)
    kw = {k: _require(obj, k, where, float) for k in ("x", "y", "w", "h", "vx", "vy", "score")}
    try:
        return Detection(id=_require(obj, "id", where, int),
                         cls=_require(obj, "class", where, str), **kw)
    except SentrackError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _word(obj, where, n_participants):
    _unknown(obj, ("name", "arity", "theta", "states", "log_transition", "outputs"), where)
    name = _require(obj, "name", where, str)
    where = f"{where} ({name!r})"
    arity = _require(obj, "arity", where, int)
    theta = _require(obj, "theta", where, list)
    if len(theta) != arity:
        raise ScenarioError(f"{where}: arity {arity} but theta has {len(theta)} entries")
    for i in theta:
        if isinstance(i, bool) or not isinstance(i, int):
            raise ScenarioError(f"{where}.theta: expected integers")
        if not 0 <= i < n_participants:
            raise ScenarioError(
                f"{where}: theta index {i} out of range for {n_participants} participants")
    states = _require(obj, "states", where, int)
    trans = _require(obj, "log_transition", where, list)
    rows = []
    for r, row in enumerate(trans):
        if not isinstance(row, list):
            raise ScenarioError(f"{where}.log_transition[{r}]: expected a list")
        rows.append([_require({"v": v}, "v", f"{where}.log_transition[{r}]", float) for v in row])
    outputs = []
    for k, out in enumerate(_require(obj, "outputs", where, list)):
        ow = f"{where}.outputs[{k}]"
        _unknown(out, ("kind", "params"), ow)
        kind = _require(out, "kind", ow, str)
        if kind not in PRIMITIVES:
            raise ScenarioError(f"{ow}: unknown primitive kind {kind!r}")
        params = [_require({"v": v}, "v", f"{ow}.params", float)
                  for v in _require(out, "params", ow, list)]
        try:
            outputs.append(PrimitiveSpec(kind, params))
        except SentrackError as exc:
            raise ScenarioError(f"{ow}: {exc}") from None
    try:
        return WordModel(name, arity, theta, states, rows, outputs)
    except (SentrackError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def scenario_from_dict(data) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected an object")
    _unknown(data, ("frames", "participants", "words", "coherence_sigma"), "scenario")
    frames = []
    for t, fr in enumerate(_require(data, "frames", "scenario", list)):
        where = f"frames[{t}]"
        _unknown(fr, ("detections",), where)
        dets = [_detection(d, f"{where}.detections[{j}]")
                for j, d in enumerate(_require(fr, "detections", where, list))]
        try:
            frames.append(Frame(dets))
        except SentrackError as exc:
            raise ScenarioError(f"{where}: {exc}") from None
    participants = []
    for l, p in enumerate(_require(data, "participants", "scenario", list)):
        where = f"participants[{l}]"
        _unknown(p, ("name", "classes"), where)
        classes = p.get("classes", [])
        if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
            raise ScenarioError(f"{where}.classes: expected a list of strings")
        participants.append(Participant(_require(p, "name", where, str), tuple(classes)))
    words = [_word(w, f"words[{i}]", len(participants))
             for i, w in enumerate(data.get("words", []))]
    sigma = _require(data, "coherence_sigma", "scenario", float)
    try:
        return ScenarioSpec(frames, participants, words, sigma)
    except SentrackError as exc:
        raise ScenarioError(f"scenario: {exc}") from None


def parse_scenario(text: str) -> ScenarioSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)


def scenario_to_dict(scenario: ScenarioSpec) -> dict:
    return {
        "frames": [
            {"detections": [
                {"id": d.id, "class": d.cls, "x": d.x, "y": d.y, "w": d.w, "h": d.h,
                 "vx": d.vx, "vy": d.vy, "score": d.score}
                for d in fr.detections]}
            for fr in scenario.frames
        ],
        "participants": [{"name": p.name, "classes": list(p.classes)}
                         for p in scenario.participants],
        "words": [
            {"name": w.name, "arity": w.arity, "theta": list(w.theta), "states": w.states,
             "log_transition": [[float(v) for v in row] for row in w.log_transition],
             "outputs": [{"kind": o.kind, "params": list(o.params)} for o in w.outputs]}
            for w in scenario.words
        ],
        "coherence_sigma": float(scenario.coherence_sigma),
    }


def _j(obj):
    return json.dumps(obj, separators=(", ", ": "))


def dump_scenario(scenario: ScenarioSpec) -> str:
    """Canonical text: one detection, participant, or word per line."""
    d = scenario_to_dict(scenario)
    lines = ["{", '  "frames": [']
    for t, fr in enumerate(d["frames"]):
        lines.append('    {"detections": [')
        dets = fr["detections"]
        for j, det in enumerate(dets):
            lines.append("      " + _j(det) + ("," if j < len(dets) - 1 else ""))
        lines.append("    ]}" + ("," if t < len(d["frames"]) - 1 else ""))
    lines.append("  ],")
    for key in ("participants", "words"):
        items = d[key]
        if not items:
            lines.append(f'  "{key}": [],')
            continue
        lines.append(f'  "{key}": [')
        for i, item in enumerate(items):
            lines.append("    " + _j(item) + ("," if i < len(items) - 1 else ""))
        lines.append("  ],")
    lines.append(f'  "coherence_sigma": {_j(d["coherence_sigma"])}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(scenario: ScenarioSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scenario(scenario))
