import json

import pytest

from validtraj.cli import main
from validtraj.core import PhysicalLimits, load_scenario, save_scenario
from validtraj.energy import EnergyConfig
from validtraj.experiments import ExperimentConfig
from validtraj.sampler import GuidanceSchedule
from validtraj.scenarios import ScenarioSpec


@pytest.fixture()
def small_config(tmp_path):
    cfg = ExperimentConfig(
        scenario=ScenarioSpec(kind="intersection", n_agents=3, horizon=8, seed=5),
        seeds=3,
        energy=EnergyConfig(
            limits=PhysicalLimits(), collision_variant="smooth_exponential"
        ),
        guidance=GuidanceSchedule("quadratic", 0.05),
        tc_window=4,
    )
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
    return path


@pytest.fixture()
def urban_config(tmp_path):
    cfg = ExperimentConfig(
        scenario=ScenarioSpec(kind="urban_dense", n_agents=5, horizon=6, seed=0),
        seeds=2,
        energy=EnergyConfig(
            limits=PhysicalLimits(), collision_variant="smooth_exponential"
        ),
        guidance=GuidanceSchedule("quadratic", 0.02),
        tc_window=3,
    )
    path = tmp_path / "urban.json"
    path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
    return path


class TestGenerateScenario:
    def test_writes_canonical_json_and_figure(self, tmp_path, capsys):
        out = tmp_path / "scn"
        code = main(
            [
                "generate-scenario",
                "--kind", "roundabout",
                "--agents", "5",
                "--horizon", "10",
                "--seed", "3",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert str(out / "scenario.json") in capsys.readouterr().out
        assert (out / "scenario.png").exists()
        original = (out / "scenario.json").read_bytes()
        scen = load_scenario(out / "scenario.json")
        assert scen.kind == "roundabout" and scen.n_agents == 5 and scen.seed == 3
        save_scenario(scen, tmp_path / "copy.json")
        assert (tmp_path / "copy.json").read_bytes() == original

    def test_no_figures_flag(self, tmp_path):
        out = tmp_path / "scn"
        assert main(["generate-scenario", "--out", str(out), "--no-figures"]) == 0
        assert (out / "scenario.json").exists()
        assert not (out / "scenario.png").exists()

    def test_seed_changes_the_scene(self, tmp_path):
        a, b, c = (tmp_path / name for name in "abc")
        for seed, out in ((1, a), (2, b), (1, c)):
            main(
                ["generate-scenario", "--kind", "urban_dense", "--agents", "4",
                 "--seed", str(seed), "--out", str(out), "--no-figures"]
            )
        assert (a / "scenario.json").read_bytes() == (c / "scenario.json").read_bytes()
        assert (a / "scenario.json").read_bytes() != (b / "scenario.json").read_bytes()


class TestSample:
    def test_csv_and_summary(self, tmp_path, small_config):
        scen_dir = tmp_path / "scn"
        main(["generate-scenario", "--config", str(small_config), "--out", str(scen_dir), "--no-figures"])
        out = tmp_path / "run"
        code = main(
            [
                "sample",
                "--config", str(small_config),
                "--scenario", str(scen_dir / "scenario.json"),
                "--method", "guided",
                "--seed", "1",
                "--out", str(out),
            ]
        )
        assert code == 0
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "agent,t,x,y,vx,vy,ax,ay"
        assert len(lines) == 1 + 3 * 8
        payload = json.loads((out / "sample.json").read_text())
        assert payload["method"] == "guided"
        assert payload["seed"] == 1
        assert payload["n_agents"] == 3 and payload["horizon"] == 8
        assert payload["diagnostics"]["steps"] == 16
        assert payload["diagnostics"]["explosion"] == 0
        assert payload["diagnostics"]["max_grad_norm"] is not None
        assert (out / "trajectory.png").exists()

    def test_unguided_needs_no_config(self, tmp_path):
        out = tmp_path / "run"
        code = main(["sample", "--method", "unguided", "--out", str(out), "--no-figures"])
        assert code == 0
        assert (out / "sample.json").exists()


def test_compare_writes_reports_and_figures(tmp_path, small_config):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(small_config), "--out", str(out)]) == 0
    for name in (
        "rows.csv",
        "diagnostics.csv",
        "temporal_validity.csv",
        "violations.csv",
        "summary.json",
        "comparison.png",
        "temporal_validity.png",
    ):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["methods"]) == {"unguided", "guided"}

    bare = tmp_path / "bare"
    assert main(["compare", "--config", str(small_config), "--out", str(bare), "--no-figures"]) == 0
    assert not (bare / "comparison.png").exists()
    assert (bare / "rows.csv").read_bytes() == (out / "rows.csv").read_bytes()


def test_ablate_schedule_cli(tmp_path, small_config):
    out = tmp_path / "abl"
    code = main(
        [
            "ablate-schedule",
            "--config", str(small_config),
            "--families", "constant,quadratic",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert (out / "rows.csv").exists()
    assert (out / "ablation.png").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["families"]) == {"constant", "quadratic"}


def test_scaling_cli(tmp_path):
    out = tmp_path / "scale"
    code = main(
        ["scaling", "--agents", "8,16", "--reps", "1", "--out", str(out)]
    )
    assert code == 0
    assert (out / "scaling.csv").exists()
    assert (out / "scaling.png").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["agent_counts"] == [8, 16]


def test_failure_sweep_cli(tmp_path, urban_config):
    out = tmp_path / "sweep"
    code = main(
        [
            "failure-sweep",
            "--config", str(urban_config),
            "--densities", "0.02,0.05",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert (out / "failure_sweep.csv").exists()
    assert (out / "failure_sweep.png").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["densities"] == [0.02, 0.05]


class TestGradcheckCli:
    def test_passes_at_default_tolerance(self, tmp_path):
        out = tmp_path / "gc"
        code = main(["gradcheck", "--instances", "5", "--out", str(out)])
        assert code == 0
        assert (out / "gradcheck.csv").exists()
        assert (out / "gradcheck.png").exists()

    def test_impossible_tolerance_fails_after_writing(self, tmp_path, capsys):
        out = tmp_path / "gc"
        code = main(
            [
                "gradcheck",
                "--instances", "3",
                "--tolerance", "1e-18",
                "--out", str(out),
                "--no-figures",
            ]
        )
        assert code == 1
        # reports are still written so the failures can be inspected
        assert (out / "gradcheck.csv").exists()
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "RuntimeError"
        assert "tolerance" in err["message"]


def test_missing_config_reports_a_json_error(tmp_path, capsys):
    code = main(["compare", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert set(err) == {"error", "message"}
    assert err["error"] == "FileNotFoundError"


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        main([])
