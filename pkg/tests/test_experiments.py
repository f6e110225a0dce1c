import json

import numpy as np
import pytest

from validtraj.core import PhysicalLimits, in_collision_set, is_kinematically_feasible
from validtraj.energy import EnergyConfig, collision_energy
from validtraj.experiments import (
    DIAG_COLUMNS,
    FAILURE_DENSITIES,
    GRADCHECK_VARIANTS,
    ROW_COLUMNS,
    ExperimentConfig,
    load_experiment_config,
    random_invalid_start,
    run_comparison,
    run_failure_sweep,
    run_gradcheck,
    run_scaling_study,
    run_schedule_ablation,
)
from validtraj.sampler import GuidanceSchedule
from validtraj.scenarios import ScenarioSpec, generate

OUT_FILES = (
    "rows.csv",
    "diagnostics.csv",
    "temporal_validity.csv",
    "violations.csv",
    "summary.json",
)


def _small_config(**overrides):
    base = dict(
        scenario=ScenarioSpec(kind="intersection", n_agents=3, horizon=8, seed=5),
        methods=("unguided", "guided"),
        seeds=6,
        energy=EnergyConfig(
            limits=PhysicalLimits(), collision_variant="smooth_exponential"
        ),
        guidance=GuidanceSchedule("quadratic", 0.05),
        tc_window=4,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_dict_round_trip(self):
        cfg = _small_config(
            methods=("unguided", "guided", "rejection", "langevin"),
            clip_grad_norm=5.0,
            max_attempts=17,
            langevin_step=2e-3,
            langevin_iterations=40,
            d_social=7.5,
        )
        # the model holds arrays, so compare the serialized forms
        assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()

    def test_default_round_trip_via_file(self, tmp_path):
        cfg = ExperimentConfig()
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
        assert load_experiment_config(path).to_dict() == cfg.to_dict()

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(methods=("guided", "annealed"))
        with pytest.raises(ValueError):
            ExperimentConfig(seeds=0)

    def test_energy_defaults_to_scenario_limits(self):
        limits = PhysicalLimits(d_safe=3.0)
        cfg = ExperimentConfig()
        assert cfg.resolved_energy(limits).limits == limits
        explicit = _small_config()
        assert explicit.resolved_energy(limits) is explicit.energy


class TestComparison:
    def test_outputs_and_reruns_are_byte_identical(self, tmp_path):
        cfg = _small_config()
        scen = generate(cfg.scenario)
        first = tmp_path / "a"
        second = tmp_path / "b"
        run_comparison(scen, cfg, out_dir=first)
        run_comparison(scen, cfg, out_dir=second)
        for name in OUT_FILES:
            assert (first / name).exists()
            if name.endswith(".csv"):
                assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_worker_count_does_not_change_the_bytes(self, tmp_path):
        cfg = _small_config(seeds=4)
        scen = generate(cfg.scenario)
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        run_comparison(scen, cfg, out_dir=serial, workers=1)
        run_comparison(scen, cfg, out_dir=parallel, workers=2)
        for name in OUT_FILES:
            if name.endswith(".csv"):
                assert (serial / name).read_bytes() == (parallel / name).read_bytes()

    def test_row_layout_and_pairing(self):
        cfg = _small_config(seeds=5)
        scen = generate(cfg.scenario)
        result = run_comparison(scen, cfg)
        assert len(result.rows) == 2 * 5
        assert set(result.rows[0]) == set(ROW_COLUMNS)
        assert set(result.diagnostics[0]) == set(DIAG_COLUMNS)
        for method in cfg.methods:
            seeds = [r["seed"] for r in result.rows if r["method"] == method]
            assert seeds == list(range(5))
        summary = result.summary
        assert set(summary["methods"]) == {"unguided", "guided"}
        assert summary["methods"]["guided"]["n"] == 5
        delta = summary["paired_guided_minus_unguided"]["validity"]
        by_seed = {
            (r["method"], r["seed"]): r["validity"] for r in result.rows
        }
        manual = np.mean(
            [by_seed[("guided", s)] - by_seed[("unguided", s)] for s in range(5)]
        )
        assert delta["mean"] == pytest.approx(float(manual))

    def test_temporal_rows_cover_the_horizon(self):
        cfg = _small_config(seeds=3)
        scen = generate(cfg.scenario)
        result = run_comparison(scen, cfg)
        for method in cfg.methods:
            ts = [row["t"] for row in result.temporal if row["method"] == method]
            assert ts == list(range(scen.horizon))
        for row in result.temporal:
            assert 0.0 <= row["valid_fraction"] <= 1.0


def test_ablation_with_zero_strength_collapses_the_families(tmp_path):
    cfg = _small_config(seeds=4, guidance=GuidanceSchedule("quadratic", 0.0))
    scen = generate(cfg.scenario)
    result = run_schedule_ablation(
        scen, cfg, families=("constant", "quadratic"), out_dir=tmp_path
    )
    per_family = {}
    for row in result.rows:
        family = row["method"].removeprefix("sched_")
        per_family.setdefault(family, []).append((row["seed"], row["validity"], row["ade"]))
    assert per_family["constant"] == per_family["quadratic"]
    assert result.summary["lambda0"] == 0.0
    diff = result.summary["paired_quadratic_minus_constant"]["validity"]["mean"]
    assert diff == 0.0
    assert (tmp_path / "rows.csv").exists()
    assert (tmp_path / "summary.json").exists()


def test_gradcheck_rotates_variants_and_stays_tight(tmp_path):
    result = run_gradcheck(instances=10, seed=0, out_dir=tmp_path)
    assert len(result.rows) == 10
    assert result.max_rel_error < 1e-4
    assert result.summary["n_failures"] == 0
    expected = [f"{c}+{k}" for c, k in GRADCHECK_VARIANTS]
    labels = [r["variant"] for r in result.rows]
    assert labels == expected + expected
    assert set(result.summary["per_variant_max"]) == set(expected)
    assert (tmp_path / "gradcheck.csv").exists()


def test_scaling_smoke_and_pruned_energy_agreement(tmp_path):
    result = run_scaling_study((8, 16), reps=2, out_dir=tmp_path)
    assert [row["n_agents"] for row in result.rows] == [8, 8, 16, 16]
    for row in result.rows:
        assert row["brute_seconds"] > 0
        assert row["pruned_seconds"] > 0
        assert row["brute_energy"] == pytest.approx(row["pruned_energy"], rel=1e-12)
    assert result.summary["agent_counts"] == [8, 16]
    assert len(result.summary["median_brute_seconds"]) == 2
    assert np.isfinite(result.summary["loglog_slope_brute"])
    assert (tmp_path / "scaling.csv").exists()


class TestFailureSweep:
    def test_summary_keys_and_monotone_headroom(self, tmp_path):
        cfg = _small_config(
            scenario=ScenarioSpec(kind="urban_dense", n_agents=6, horizon=6, seed=0),
            seeds=4,
            guidance=GuidanceSchedule("quadratic", 0.02),
        )
        result = run_failure_sweep(cfg, densities=(0.02, 0.06), out_dir=tmp_path)
        assert len(result.rows) == 2 * 4
        per = result.summary["per_density"]
        assert set(per) == {repr(0.02), repr(0.06)}
        for stats in per.values():
            assert 0.0 <= stats["validity"] <= 1.0
            assert 0.0 <= stats["explosion_rate"] <= 1.0
            assert stats["infeasible_rate"] == 0.0
        assert result.summary["densities"] == [0.02, 0.06]
        assert (tmp_path / "failure_sweep.csv").exists()

    def test_unplaceable_density_scores_as_failure(self):
        cfg = _small_config(
            scenario=ScenarioSpec(
                kind="urban_dense", n_agents=4, horizon=4, seed=0, arena_size=6.0
            ),
            seeds=3,
        )
        result = run_failure_sweep(cfg, densities=(3.0,))
        stats = result.summary["per_density"][repr(3.0)]
        assert stats["infeasible_rate"] == 1.0
        assert stats["validity"] == 0.0
        assert stats["explosion_rate"] == 0.0
        for row in result.rows:
            assert row["generated"] == 0


class TestRandomInvalidStart:
    @pytest.mark.parametrize("seed", range(8))
    def test_always_in_collision_but_otherwise_feasible(self, seed):
        limits = PhysicalLimits()
        traj = random_invalid_start(limits, seed)
        assert traj.states.shape == (3, 8, 6)
        assert in_collision_set(traj, limits)
        assert is_kinematically_feasible(traj, limits)
        # closest approach is pinned away from the 1/d singularity so the
        # repair experiments start from finite energies
        cfg = EnergyConfig(limits=limits)
        assert np.isfinite(collision_energy(traj, cfg))

    def test_deterministic_per_seed(self):
        limits = PhysicalLimits()
        a = random_invalid_start(limits, 3)
        b = random_invalid_start(limits, 3)
        c = random_invalid_start(limits, 4)
        assert a.states.tobytes() == b.states.tobytes()
        assert a.states.tobytes() != c.states.tobytes()


def test_default_constants_are_pinned():
    assert FAILURE_DENSITIES == (0.02, 0.06, 0.12)
    assert len(GRADCHECK_VARIANTS) == 5
