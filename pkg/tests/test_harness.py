import json
import math

import pytest

from conftest import random_scenario
from sentrack.cli import main
from sentrack.compare import SolveReport, compare_run, histogram, relative_error, solve_one
from sentrack.errors import ParameterError, ScenarioError, UndefinedError
from sentrack.exact import viterbi_joint
from sentrack.generate import GeneratorConfig, generate_scenario, planted_tracks
from sentrack.growth import GtSchedule
from sentrack.models import TrackCollection, score_discrete
from sentrack.scenario_io import (
    dump_scenario,
    parse_scenario,
    save_scenario,
    scenario_to_dict,
)

FAST = GtSchedule(restarts=3, iters_per_restart=20, refine_iters=20, seed=5)


class TestScenarioFormat:
    def test_round_trip_is_byte_identical(self, rng):
        for _ in range(10):
            text = dump_scenario(random_scenario(rng, T=3, L=2, W=2))
            again = dump_scenario(parse_scenario(text))
            assert again == text

    def test_round_trip_preserves_scores(self, rng):
        sc = random_scenario(rng, T=4, L=2, W=3)
        back = parse_scenario(dump_scenario(sc))
        tracks = TrackCollection([[f.detections[sc.pools[t][l][0]].id for t, f in enumerate(sc.frames)]
                                  for l in range(sc.L)], [[0] * sc.T for _ in sc.words])
        assert score_discrete(back, tracks) == score_discrete(sc, tracks)

    def _edit(self, rng, fn):
        d = scenario_to_dict(random_scenario(rng, T=2, L=2, W=1))
        d["words"][0]["name"] = "approach"
        fn(d)
        return json.dumps(d)

    def test_theta_out_of_range_names_word(self, rng):
        text = self._edit(rng, lambda d: d["words"][0].update(arity=1, theta=[7]))
        with pytest.raises(ScenarioError, match="approach.*theta index 7 out of range for 2"):
            parse_scenario(text)

    def test_arity_mismatch_names_word(self, rng):
        text = self._edit(rng, lambda d: d["words"][0].update(arity=2, theta=[0]))
        with pytest.raises(ScenarioError, match="approach.*arity 2 but theta has 1"):
            parse_scenario(text)

    def test_unknown_primitive(self, rng):
        def bad(d):
            d["words"][0]["outputs"][0]["kind"] = "NEAR"
        with pytest.raises(ScenarioError, match="unknown primitive kind 'NEAR'"):
            parse_scenario(self._edit(rng, bad))

    def test_unknown_field(self, rng):
        with pytest.raises(ScenarioError, match="unknown field"):
            parse_scenario(self._edit(rng, lambda d: d.update(fps=30)))

    def test_not_json(self):
        with pytest.raises(ScenarioError, match="line 1"):
            parse_scenario("{frames")


class TestGenerator:
    def test_deterministic(self):
        cfg = GeneratorConfig(T=5, L=2, W=2, seed=3)
        assert dump_scenario(generate_scenario(cfg)) == dump_scenario(generate_scenario(cfg))
        other = GeneratorConfig(T=5, L=2, W=2, seed=4)
        assert dump_scenario(generate_scenario(cfg)) != dump_scenario(generate_scenario(other))

    @pytest.mark.parametrize("L,classes,distractors", [(1, None, 4), (2, None, 3), (3, 1, 2), (3, 2, 0)])
    def test_detection_counts(self, L, classes, distractors):
        cfg = GeneratorConfig(T=3, L=L, W=1, classes=classes, distractor_count=distractors)
        sc = generate_scenario(cfg)
        n_cls = classes or L
        for f in sc.frames:
            assert len(f.detections) == L + distractors * n_cls

    def test_detections_per_class(self):
        sc = generate_scenario(GeneratorConfig(T=2, L=2, W=0, detections_per_class=5))
        assert [sc.pool_size(l) for l in range(2)] == [5, 5]
        with pytest.raises(ParameterError):
            generate_scenario(GeneratorConfig(T=2, L=2, W=0, classes=1, detections_per_class=1))

    def test_planted_track_is_optimal_without_noise(self):
        for seed in range(5):
            cfg = GeneratorConfig(T=6, L=1, W=0, distractor_count=4, noise_sigma=0.0, seed=seed)
            sc = generate_scenario(cfg)
            tracks, value = viterbi_joint(sc)
            assert [list(t) for t in tracks.tracks] == planted_tracks(cfg)
            assert value == 0.0

    def test_invalid_config(self):
        with pytest.raises(ParameterError):
            GeneratorConfig(T=1)
        with pytest.raises(ParameterError):
            GeneratorConfig(noise_sigma=-1.0)


class TestCompare:
    def test_relative_error(self):
        assert relative_error(-100.0, -102.0) == pytest.approx(2.0)
        assert relative_error(50.0, 49.0) == pytest.approx(2.0)
        assert relative_error(-3.0, -3.0) == 0.0
        with pytest.raises(UndefinedError):
            relative_error(0.0, 1.0)

    def test_histogram(self):
        bins = histogram([0.0, 0.5, 1.0, 19.99, 20.0, 350.0])
        assert len(bins) == 21
        assert bins[0] == 2 and bins[1] == 1 and bins[19] == 1 and bins[20] == 2

    def test_tiny_scenario_finds_optimum(self, rng):
        sc = random_scenario(rng, T=3, J=2, K=2, L=1, W=1)
        rec = solve_one("tiny", sc, GtSchedule(restarts=4, iters_per_restart=50,
                                               refine_iters=200, seed=0))
        assert rec.error is None
        assert rec.rounded == rec.exact
        assert rec.rel_err_pct == 0.0

    def test_zero_exact_is_reported_undefined(self):
        sc = generate_scenario(GeneratorConfig(T=3, L=1, W=0, distractor_count=1, noise_sigma=0.0))
        rec = solve_one("zero", sc, FAST)
        assert rec.exact == 0.0 and rec.rounded == 0.0
        assert rec.rel_err_pct is None
        assert rec.error.startswith("UndefinedError")

    def test_soundness_and_bins(self, rng):
        scs = {f"s{i:02d}": random_scenario(rng, T=3, J=3, K=2, L=2, W=2) for i in range(6)}
        rep = compare_run(scs, FAST)
        assert [r.name for r in rep.records] == sorted(scs)
        for r in rep.records:
            assert r.error is None
            assert r.rounded <= r.exact + 1e-9
            assert r.rel_err_pct == pytest.approx(relative_error(r.exact, r.rounded))
        agg = rep.aggregate()
        assert sum(agg["bins"]) == agg["tractable"] == 6

    def test_cap_marks_intractable(self, rng):
        sc = random_scenario(rng, T=3, J=3, K=3, L=2, W=2, fixed_sizes=True)
        rep = compare_run({"big": sc}, FAST, cap=5)
        rec = rep.records[0]
        assert rec.intractable and rec.exact is None and rec.rel_err_pct is None
        assert rec.rounded is not None and rec.cost_estimate > 0
        assert rep.aggregate()["bins"] == [0] * 21
        assert not rep.failed

    def test_failure_isolated(self, rng, monkeypatch):
        import sentrack.compare as cmp

        real = cmp.build_sentence_objective

        def flaky(scenario, tables=None):
            if scenario.T == 4:
                raise RuntimeError("boom")
            return real(scenario, tables)

        monkeypatch.setattr(cmp, "build_sentence_objective", flaky)
        rep = compare_run({"a": random_scenario(rng, T=3), "b": random_scenario(rng, T=4)}, FAST)
        assert rep.records[0].error is None
        assert rep.records[1].error == "RuntimeError: boom"
        assert rep.failed

    def test_batch_determinism(self, rng):
        scs = {f"s{i}": random_scenario(rng, T=3, J=3, K=2, L=2, W=1) for i in range(4)}
        a = json.dumps(compare_run(scs, FAST).to_dict(timing=False), sort_keys=True)
        b = json.dumps(compare_run(scs, FAST, workers=2).to_dict(timing=False), sort_keys=True)
        assert a == b

    def test_empty_report(self):
        agg = SolveReport([]).aggregate()
        assert agg["mean"] is None and agg["bins"] == [0] * 21


class TestCli:
    def test_cost(self, capsys):
        assert main(["cost", "--frames", "15", "--detections", "120", "--participants", "4",
                     "--states", "3"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["comparisons"] == 5804752896000000000
        assert out["formatted"] == "5,804,752,896,000,000,000"

    def test_cost_bad_values(self, capsys):
        assert main(["cost", "--frames", "0", "--detections", "1", "--participants", "1",
                     "--states", "3"]) == 2

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["track"])
        assert info.value.code == 2
        with pytest.raises(SystemExit) as info:
            main(["cost", "--frames", "3", "--detections", "2", "--participants", "1",
                  "--states", "a,b"])
        assert info.value.code == 2

    def test_gen_then_track(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        assert main(["gen", "--frames", "3", "--participants", "2", "--words", "1",
                     "--distractors", "1", "--seed", "2", "--out", str(path)]) == 0
        sc = parse_scenario(path.read_text())
        assert sc.T == 3 and sc.L == 2 and sc.W == 1
        assert main(["track", str(path), "--solver", "viterbi"]) == 0
        exact = json.loads(capsys.readouterr().out)
        assert main(["track", str(path), "--restarts", "3", "--iters", "30", "--refine", "50"]) == 0
        gt = json.loads(capsys.readouterr().out)
        assert gt["value"] <= exact["value"] + 1e-9
        assert len(gt["tracks"]) == 2 and len(gt["states"]) == 1
        assert math.isfinite(gt["relaxed"])

    def test_track_intractable(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        save_scenario(generate_scenario(GeneratorConfig(T=3, L=2, W=2)), path)
        assert main(["track", str(path), "--solver", "viterbi", "--cap", "10"]) == 1
        out = json.loads(capsys.readouterr().out)
        assert out["intractable"] and "intractable for Viterbi" in out["error"]

    def test_track_bad_file(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        assert main(["track", str(path)]) == 1
        assert "error" in capsys.readouterr().err

    def test_compare_directory(self, tmp_path, capsys):
        for seed in range(2):
            save_scenario(generate_scenario(GeneratorConfig(T=3, L=1, W=1, distractor_count=2,
                                                            seed=seed)), tmp_path / f"s{seed}.json")
        out = tmp_path / "report.json"
        args = ["compare", str(tmp_path), "--restarts", "2", "--iters", "20", "--refine", "20",
                "--out", str(out)]
        assert main(args) == 0
        report = json.loads(out.read_text())
        assert [r["name"] for r in report["scenarios"]] == ["s0", "s1"]
        assert sum(report["aggregate"]["bins"]) == 2
        (tmp_path / "broken.json").write_text("[")
        assert main(args) == 1
        report = json.loads(out.read_text())
        assert report["scenarios"][0]["name"] == "broken"
        assert report["scenarios"][0]["error"].startswith("ScenarioError")
