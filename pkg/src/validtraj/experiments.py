"""Benchmark operations: method comparisons, ablations, sweeps, checks.

Every operation here is deterministic for a fixed configuration: seeds map to
independent PCG64 streams, result rows are emitted in a fixed order no matter
how many workers ran them, and floats are written with repr() so repeated runs
produce byte-identical CSV files.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    PhysicalLimits,
    Scenario,
    ScenarioInfeasibleError,
    Trajectory,
    in_collision_set,
    is_valid,
    timestep_validity,
)
from .diffusion import BaseModel, constant_velocity_rollout
from .energy import (
    EnergyConfig,
    collision_energy,
    total_energy_and_grad,
)
from .graph import GraphConfig, build_graph, collision_energy_pruned
from .metrics import (
    ade,
    fde,
    jerk_profile,
    social_conformity,
    temporal_consistency,
    diversity_logdet,
    violation_breakdown,
)
from .sampler import (
    DEFAULT_C_CRIT,
    DEFAULT_MAX_ATTEMPTS,
    GradientExplosionError,
    GuidanceSchedule,
    SamplerDiagnostics,
    langevin_refine,
    rejection_sample,
    sample,
    unguided_sample,
)
from .scenarios import ScenarioSpec, generate

ROW_COLUMNS = (
    "scenario",
    "kind",
    "method",
    "seed",
    "validity",
    "collision",
    "ade",
    "fde",
    "tc",
    "jerk",
    "social",
    "diversity",
)

DIAG_COLUMNS = (
    "scenario",
    "method",
    "seed",
    "steps",
    "attempts",
    "explosion",
    "abort_step",
    "max_grad_norm",
    "final_energy",
)

METHODS = ("unguided", "guided", "rejection", "langevin")

SCALING_AGENT_COUNTS = (16, 32, 64, 128)
FAILURE_DENSITIES = (0.02, 0.06, 0.12)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one benchmark run needs besides the output directory."""

    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    methods: tuple[str, ...] = ("unguided", "guided")
    seeds: int = 100
    energy: EnergyConfig | None = None
    model: BaseModel = field(default_factory=BaseModel)
    guidance: GuidanceSchedule = field(default_factory=GuidanceSchedule)
    c_crit: float = DEFAULT_C_CRIT
    clip_grad_norm: float | None = None
    max_attempts: int = 50
    langevin_step: float = 1e-3
    langevin_iterations: int = 100
    tc_window: int = 10
    d_social: float = 5.0

    def __post_init__(self) -> None:
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")

    def resolved_energy(self, limits: PhysicalLimits) -> EnergyConfig:
        if self.energy is not None:
            return self.energy
        return EnergyConfig(limits=limits)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "methods": list(self.methods),
            "seeds": self.seeds,
            "energy": None if self.energy is None else self.energy.to_dict(),
            "model": self.model.to_dict(),
            "guidance": self.guidance.to_dict(),
            "sampler": {
                "c_crit": self.c_crit,
                "clip_grad_norm": self.clip_grad_norm,
                "max_attempts": self.max_attempts,
            },
            "langevin": {
                "step_size": self.langevin_step,
                "iterations": self.langevin_iterations,
            },
            "metrics": {"tc_window": self.tc_window, "d_social": self.d_social},
        }

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        sampler = data.get("sampler", {})
        langevin = data.get("langevin", {})
        metrics = data.get("metrics", {})
        clip = sampler.get("clip_grad_norm")
        return ExperimentConfig(
            scenario=ScenarioSpec.from_dict(data.get("scenario", {})),
            methods=tuple(data.get("methods", ("unguided", "guided"))),
            seeds=int(data.get("seeds", 100)),
            energy=(
                EnergyConfig.from_dict(data["energy"])
                if data.get("energy") is not None
                else None
            ),
            model=BaseModel.from_dict(data.get("model", {})),
            guidance=GuidanceSchedule.from_dict(data.get("guidance", {})),
            c_crit=float(sampler.get("c_crit", DEFAULT_C_CRIT)),
            clip_grad_norm=None if clip is None else float(clip),
            max_attempts=int(sampler.get("max_attempts", 50)),
            langevin_step=float(langevin.get("step_size", 1e-3)),
            langevin_iterations=int(langevin.get("iterations", 100)),
            tc_window=int(metrics.get("tc_window", 10)),
            d_social=float(metrics.get("d_social", 5.0)),
        )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _fmt(value) -> str:
    """Stable CSV cell rendering; repr keeps float round-trips exact."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _draw(
    method: str,
    scenario: Scenario,
    config: ExperimentConfig,
    seed: int,
) -> tuple[Trajectory | None, SamplerDiagnostics]:
    """One sample for one (method, seed); None signals a failed draw."""
    cfg = config.resolved_energy(scenario.limits)
    if method == "unguided":
        return unguided_sample(scenario, config.model, cfg, seed)
    if method == "guided":
        try:
            return sample(
                scenario,
                config.model,
                cfg,
                config.guidance,
                seed,
                c_crit=config.c_crit,
                clip_grad_norm=config.clip_grad_norm,
            )
        except GradientExplosionError:
            diag = SamplerDiagnostics()
            diag.explosion_flag = True
            return None, diag
    if method == "rejection":
        result = rejection_sample(
            scenario, config.model, scenario.limits, config.max_attempts, seed
        )
        return result.trajectory, result.diagnostics
    if method == "langevin":
        base, _ = unguided_sample(scenario, config.model, cfg, seed)
        return langevin_refine(
            base,
            cfg,
            config.langevin_step,
            config.langevin_iterations,
            seed=seed,
            c_crit=config.c_crit,
            clip_grad_norm=config.clip_grad_norm,
        )
    raise ValueError(f"unknown method {method!r}")


def _run_cell(args: tuple) -> tuple[str, int, Trajectory | None, SamplerDiagnostics]:
    """Worker task: returns (method, seed, trajectory, diagnostics)."""
    method, scenario, config, seed = args
    traj, diag = _draw(method, scenario, config, seed)
    return method, seed, traj, diag


def _collect_cells(
    scenario: Scenario,
    config: ExperimentConfig,
    methods: Sequence[str],
    workers: int,
) -> dict[tuple[str, int], tuple[Trajectory | None, SamplerDiagnostics]]:
    tasks = [
        (method, scenario, config, seed)
        for method in methods
        for seed in range(config.seeds)
    ]
    out: dict[tuple[str, int], tuple[Trajectory | None, SamplerDiagnostics]] = {}
    if workers <= 1:
        for task in tasks:
            method, seed, traj, diag = _run_cell(task)
            out[(method, seed)] = (traj, diag)
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for method, seed, traj, diag in pool.map(_run_cell, tasks, chunksize=8):
            out[(method, seed)] = (traj, diag)
    return out


def _metric_cells(
    traj: Trajectory | None,
    reference: Trajectory,
    limits: PhysicalLimits,
    window: int,
    d_social: float,
) -> dict:
    """Per-sample metric columns; failed draws count invalid and colliding."""
    if traj is None:
        return {
            "validity": 0.0,
            "collision": 1.0,
            "ade": float("nan"),
            "fde": float("nan"),
            "tc": float("nan"),
            "jerk": float("nan"),
            "social": float("nan"),
        }
    return {
        "validity": float(is_valid(traj, limits)),
        "collision": float(in_collision_set(traj, limits)),
        "ade": ade(traj, reference),
        "fde": fde(traj, reference),
        "tc": temporal_consistency([traj], limits, min(window, traj.horizon)),
        "jerk": jerk_profile(traj),
        "social": social_conformity(traj, d_social),
    }


def _diag_row(
    label: str, method: str, seed: int, diag: SamplerDiagnostics
) -> dict:
    norms = diag.grad_norms
    energies = diag.energies
    return {
        "scenario": label,
        "method": method,
        "seed": seed,
        "steps": diag.step_count,
        "attempts": diag.attempts,
        "explosion": int(diag.explosion_flag),
        "abort_step": -1 if diag.abort_step is None else diag.abort_step,
        "max_grad_norm": float(np.max(norms)) if norms else float("nan"),
        "final_energy": float(energies[-1]) if energies else float("nan"),
    }


def _nanmean(values: list[float]) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return float(np.nanmean(arr)) if arr.size and not np.isnan(arr).all() else float("nan")


def _method_summary(
    rows: list[dict],
    samples: list[Trajectory],
    limits: PhysicalLimits,
) -> dict:
    summary = {
        "n": len(rows),
        "n_failed": sum(1 for r in rows if np.isnan(r["ade"])),
        "validity": float(np.mean([r["validity"] for r in rows])),
        "collision": float(np.mean([r["collision"] for r in rows])),
        "ade": _nanmean([r["ade"] for r in rows]),
        "fde": _nanmean([r["fde"] for r in rows]),
        "tc": _nanmean([r["tc"] for r in rows]),
        "jerk": _nanmean([r["jerk"] for r in rows]),
        "social": _nanmean([r["social"] for r in rows]),
        "diversity": rows[0]["diversity"] if rows else float("nan"),
    }
    summary["violations"] = (
        violation_breakdown(samples, limits)
        if samples
        else {"collision": 0, "speed": 0, "acceleration": 0}
    )
    return summary


def _paired_delta(rows_a: list[dict], rows_b: list[dict], key: str) -> dict:
    """Mean per-seed difference a - b with its standard error."""
    by_seed_b = {r["seed"]: r for r in rows_b}
    diffs = np.array(
        [r[key] - by_seed_b[r["seed"]][key] for r in rows_a if r["seed"] in by_seed_b]
    )
    if diffs.size == 0:
        return {"mean": float("nan"), "se": float("nan"), "n": 0}
    se = float(diffs.std(ddof=1) / np.sqrt(diffs.size)) if diffs.size > 1 else 0.0
    return {"mean": float(diffs.mean()), "se": se, "n": int(diffs.size)}


@dataclass(frozen=True)
class ComparisonResult:
    rows: list[dict]
    diagnostics: list[dict]
    summary: dict
    temporal: list[dict]


def run_comparison(
    scenario: Scenario,
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    workers: int = 1,
    label: str | None = None,
) -> ComparisonResult:
    """Sample every configured method with paired seeds and tabulate metrics.

    Writes rows.csv, diagnostics.csv, temporal_validity.csv, violations.csv
    and summary.json when out_dir is given.
    """
    label = label if label is not None else scenario.kind
    reference = config.model.prior_mean(scenario)
    cells = _collect_cells(scenario, config, config.methods, workers)

    rows: list[dict] = []
    diag_rows: list[dict] = []
    temporal_rows: list[dict] = []
    per_method_rows: dict[str, list[dict]] = {}
    per_method_samples: dict[str, list[Trajectory]] = {}
    for method in config.methods:
        samples = [
            cells[(method, seed)][0]
            for seed in range(config.seeds)
            if cells[(method, seed)][0] is not None
        ]
        per_method_samples[method] = samples
        diversity = diversity_logdet(samples) if len(samples) >= 2 else float("nan")
        method_rows = []
        for seed in range(config.seeds):
            traj, diag = cells[(method, seed)]
            row = {
                "scenario": label,
                "kind": scenario.kind,
                "method": method,
                "seed": seed,
                "diversity": diversity,
            }
            row.update(
                _metric_cells(
                    traj, reference, scenario.limits, config.tc_window, config.d_social
                )
            )
            method_rows.append(row)
            diag_rows.append(_diag_row(label, method, seed, diag))
        per_method_rows[method] = method_rows
        rows.extend(method_rows)
        if samples:
            per_step = np.mean(
                [timestep_validity(s, scenario.limits) for s in samples], axis=0
            )
            for t, frac in enumerate(per_step):
                temporal_rows.append(
                    {"scenario": label, "method": method, "t": t, "valid_fraction": float(frac)}
                )

    summary: dict = {
        "scenario": label,
        "kind": scenario.kind,
        "seeds": config.seeds,
        "methods": {
            m: _method_summary(per_method_rows[m], per_method_samples[m], scenario.limits)
            for m in config.methods
        },
    }
    if "guided" in config.methods and "unguided" in config.methods:
        summary["paired_guided_minus_unguided"] = {
            key: _paired_delta(
                per_method_rows["guided"], per_method_rows["unguided"], key
            )
            for key in ("validity", "collision", "ade")
        }

    result = ComparisonResult(rows, diag_rows, summary, temporal_rows)
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(out / "rows.csv", ROW_COLUMNS, rows)
        write_csv(out / "diagnostics.csv", DIAG_COLUMNS, diag_rows)
        write_csv(
            out / "temporal_validity.csv",
            ("scenario", "method", "t", "valid_fraction"),
            temporal_rows,
        )
        violation_rows = [
            {"method": m, **summary["methods"][m]["violations"]}
            for m in config.methods
        ]
        write_csv(
            out / "violations.csv",
            ("method", "collision", "speed", "acceleration"),
            violation_rows,
        )
        write_json(out / "summary.json", {"config": config.to_dict(), **summary})
    return result


@dataclass(frozen=True)
class AblationResult:
    rows: list[dict]
    summary: dict


def run_schedule_ablation(
    scenario: Scenario,
    config: ExperimentConfig,
    families: Sequence[str] = ("constant", "linear", "quadratic", "exponential"),
    out_dir: str | Path | None = None,
    workers: int = 1,
    label: str | None = None,
) -> AblationResult:
    """Rerun guided sampling once per schedule family on identical seeds."""
    label = label if label is not None else scenario.kind
    reference = config.model.prior_mean(scenario)
    rows: list[dict] = []
    family_stats: dict[str, dict] = {}
    per_family_rows: dict[str, list[dict]] = {}
    for family in families:
        fam_config = replace(
            config,
            methods=("guided",),
            guidance=replace(config.guidance, family=family),
        )
        cells = _collect_cells(scenario, fam_config, ("guided",), workers)
        samples = [
            cells[("guided", seed)][0]
            for seed in range(config.seeds)
            if cells[("guided", seed)][0] is not None
        ]
        diversity = diversity_logdet(samples) if len(samples) >= 2 else float("nan")
        fam_rows = []
        for seed in range(config.seeds):
            traj, _ = cells[("guided", seed)]
            row = {
                "scenario": label,
                "kind": scenario.kind,
                "method": f"sched_{family}",
                "seed": seed,
                "diversity": diversity,
            }
            row.update(
                _metric_cells(
                    traj, reference, scenario.limits, config.tc_window, config.d_social
                )
            )
            fam_rows.append(row)
        rows.extend(fam_rows)
        per_family_rows[family] = fam_rows
        family_stats[family] = _method_summary(fam_rows, samples, scenario.limits)

    summary: dict = {
        "scenario": label,
        "seeds": config.seeds,
        "lambda0": config.guidance.lambda0,
        "families": family_stats,
    }
    if "quadratic" in family_stats and "constant" in family_stats:
        summary["paired_quadratic_minus_constant"] = {
            key: _paired_delta(
                per_family_rows["quadratic"], per_family_rows["constant"], key
            )
            for key in ("validity", "collision", "jerk")
        }
    result = AblationResult(rows, summary)
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(out / "rows.csv", ROW_COLUMNS, rows)
        write_json(out / "summary.json", {"config": config.to_dict(), **summary})
    return result


def _collision_energy_loop(traj: Trajectory, cfg: EnergyConfig) -> float:
    """All-pairs reference evaluation, quadratic in the agent count."""
    pos = traj.positions
    n, horizon = traj.n_agents, traj.horizon
    d_safe, d_min = cfg.limits.d_safe, cfg.d_min
    total = 0.0
    for t in range(horizon):
        for i in range(n):
            for j in range(i + 1, n):
                d = float(np.linalg.norm(pos[i, t] - pos[j, t]))
                if d < d_safe:
                    d_tilde = max(d, d_min)
                    total += (1.0 / d_tilde - 1.0 / d_safe) ** 2
    return total


def _scaling_scenario(n_agents: int, seed: int) -> Scenario:
    """Sparse placement so grid pruning has something to skip."""
    spec = ScenarioSpec(
        kind="urban_dense",
        n_agents=n_agents,
        horizon=10,
        density_target=0.01,
        seed=seed,
    )
    return generate(spec)


@dataclass(frozen=True)
class ScalingResult:
    rows: list[dict]
    summary: dict


def run_scaling_study(
    agent_counts: Sequence[int] = SCALING_AGENT_COUNTS,
    reps: int = 5,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> ScalingResult:
    """Time all-pairs versus grid-pruned collision energy across agent counts.

    One warm-up evaluation per size is discarded, then the median of `reps`
    timed repetitions is kept. The brute-force log-log slope against N is the
    quantity of interest; at the largest N the pruned path must win outright.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rows: list[dict] = []
    medians: dict[int, dict[str, float]] = {}
    gcfg = GraphConfig()
    for n in agent_counts:
        scenario = _scaling_scenario(n, seed)
        traj = constant_velocity_rollout(scenario)
        cfg = EnergyConfig(limits=scenario.limits)
        _collision_energy_loop(traj, cfg)
        graph = build_graph(traj, gcfg)
        collision_energy_pruned(traj, cfg, graph)
        brute_times = []
        pruned_times = []
        for rep in range(reps):
            t0 = time.perf_counter()
            brute_val = _collision_energy_loop(traj, cfg)
            t1 = time.perf_counter()
            graph = build_graph(traj, gcfg)
            pruned_val = collision_energy_pruned(traj, cfg, graph)
            t2 = time.perf_counter()
            brute_times.append(t1 - t0)
            pruned_times.append(t2 - t1)
            rows.append(
                {
                    "n_agents": n,
                    "rep": rep,
                    "brute_seconds": t1 - t0,
                    "pruned_seconds": t2 - t1,
                    "brute_energy": brute_val,
                    "pruned_energy": pruned_val,
                }
            )
        medians[n] = {
            "brute": float(np.median(brute_times)),
            "pruned": float(np.median(pruned_times)),
        }
    ns = np.array(list(agent_counts), dtype=np.float64)
    brute = np.array([medians[n]["brute"] for n in agent_counts])
    pruned = np.array([medians[n]["pruned"] for n in agent_counts])
    slope = float(np.polyfit(np.log(ns), np.log(brute), 1)[0])
    summary = {
        "agent_counts": list(agent_counts),
        "median_brute_seconds": brute.tolist(),
        "median_pruned_seconds": pruned.tolist(),
        "loglog_slope_brute": slope,
        "pruned_faster_at_largest": bool(pruned[-1] < brute[-1]),
    }
    result = ScalingResult(rows, summary)
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(
            out / "scaling.csv",
            (
                "n_agents",
                "rep",
                "brute_seconds",
                "pruned_seconds",
                "brute_energy",
                "pruned_energy",
            ),
            rows,
        )
        write_json(out / "summary.json", summary)
    return result


def _failure_cell(args: tuple) -> dict:
    density, seed, config = args
    spec = replace(config.scenario, density_target=density, seed=seed)
    try:
        scenario = generate(spec)
    except ScenarioInfeasibleError:
        return {
            "density": density,
            "seed": seed,
            "generated": 0,
            "validity": 0.0,
            "explosion": 0,
            "max_grad_norm": float("nan"),
        }
    cfg = config.resolved_energy(scenario.limits)
    try:
        traj, diag = sample(
            scenario,
            config.model,
            cfg,
            config.guidance,
            seed,
            c_crit=config.c_crit,
            clip_grad_norm=config.clip_grad_norm,
        )
        valid = float(is_valid(traj, scenario.limits))
    except GradientExplosionError as err:
        diag = SamplerDiagnostics()
        diag.explosion_flag = True
        diag.grad_norms = [err.grad_norm]
        valid = 0.0
    norms = diag.grad_norms
    return {
        "density": density,
        "seed": seed,
        "generated": 1,
        "validity": valid,
        "explosion": int(diag.explosion_flag),
        "max_grad_norm": float(np.max(norms)) if norms else float("nan"),
    }


@dataclass(frozen=True)
class FailureSweepResult:
    rows: list[dict]
    summary: dict


def run_failure_sweep(
    config: ExperimentConfig,
    densities: Sequence[float] = FAILURE_DENSITIES,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> FailureSweepResult:
    """Guided sampling across agent densities, watching validity collapse.

    The scenario spec's kind should be urban_dense; each seed regenerates the
    scene at the requested density. Scenes the generator cannot place are
    scored as failed samples rather than skipped, since running out of room
    is part of the same failure mode the sweep measures.
    """
    tasks = [
        (density, seed, config)
        for density in densities
        for seed in range(config.seeds)
    ]
    results: dict[tuple[float, int], dict] = {}
    if workers <= 1:
        for task in tasks:
            row = _failure_cell(task)
            results[(row["density"], row["seed"])] = row
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_failure_cell, tasks, chunksize=8):
                results[(row["density"], row["seed"])] = row
    rows = [results[(d, s)] for d in densities for s in range(config.seeds)]
    summary: dict = {"densities": list(densities), "seeds": config.seeds, "per_density": {}}
    for density in densities:
        sub = [r for r in rows if r["density"] == density]
        norms = [r["max_grad_norm"] for r in sub if not np.isnan(r["max_grad_norm"])]
        summary["per_density"][repr(float(density))] = {
            "validity": float(np.mean([r["validity"] for r in sub])),
            "explosion_rate": float(np.mean([r["explosion"] for r in sub])),
            "infeasible_rate": float(np.mean([1 - r["generated"] for r in sub])),
            "mean_max_grad_norm": _nanmean(norms) if norms else float("nan"),
        }
    result = FailureSweepResult(rows, summary)
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(
            out / "failure_sweep.csv",
            ("density", "seed", "generated", "validity", "explosion", "max_grad_norm"),
            rows,
        )
        write_json(out / "summary.json", {"config": config.to_dict(), **summary})
    return result

GRADCHECK_VARIANTS = (
    ("inverse_distance", "speed_hinge"),
    ("smooth_exponential", "speed_hinge"),
    ("gaussian_rbf", "speed_hinge"),
    ("soft_minimum", "speed_hinge"),
    ("inverse_distance", "consistency"),
)

GRADCHECK_TOLERANCE = 1e-4
_LOCUS_BAND = 5e-3


def _finite_difference_grad(
    traj: Trajectory, cfg: EnergyConfig, rel_step: float = 1e-5
) -> np.ndarray:
    """Central differences with a coordinate-scaled step."""
    base = traj.states
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        h = rel_step * max(1.0, abs(float(base[idx])))
        plus = base.copy()
        minus = base.copy()
        plus[idx] += h
        minus[idx] -= h
        e_plus = total_energy_and_grad(traj.with_states(plus), cfg).e_total
        e_minus = total_energy_and_grad(traj.with_states(minus), cfg).e_total
        grad[idx] = (e_plus - e_minus) / (2.0 * h)
        it.iternext()
    return grad


def _near_nonsmooth_locus(traj: Trajectory, cfg: EnergyConfig) -> bool:
    """True when any coordinate sits near a kink of the energy surface.

    Kinks: the d_min clamp and the d_safe cutoff of the pair terms, and the
    hinge corners at v_max / a_max. Finite differences straddle these, so
    gradcheck instances are redrawn until they stay clear.
    """
    pos = traj.positions
    n = traj.n_agents
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(pos[i] - pos[j], axis=-1)
            if np.any(np.abs(d - cfg.limits.d_safe) < _LOCUS_BAND):
                return True
            if np.any(d < cfg.d_min + _LOCUS_BAND):
                return True
    speeds = np.linalg.norm(traj.velocities, axis=-1)
    if np.any(np.abs(speeds - cfg.limits.v_max) < _LOCUS_BAND):
        return True
    accs = np.linalg.norm(traj.accelerations, axis=-1)
    if np.any(np.abs(accs - cfg.limits.a_max) < _LOCUS_BAND):
        return True
    return False


def _random_instance(
    rng: np.random.Generator, limits: PhysicalLimits
) -> Trajectory:
    n = int(rng.integers(2, 5))
    horizon = int(rng.integers(2, 6))
    states = np.empty((n, horizon, 6))
    states[..., 0:2] = rng.uniform(-2.0 * limits.d_safe, 2.0 * limits.d_safe, (n, horizon, 2))
    states[..., 2:4] = rng.uniform(-1.3 * limits.v_max, 1.3 * limits.v_max, (n, horizon, 2))
    states[..., 4:6] = rng.uniform(-1.3 * limits.a_max, 1.3 * limits.a_max, (n, horizon, 2))
    return Trajectory(states)


@dataclass(frozen=True)
class GradcheckResult:
    rows: list[dict]
    summary: dict

    @property
    def max_rel_error(self) -> float:
        return self.summary["max_rel_error"]


def run_gradcheck(
    instances: int = 1000,
    seed: int = 0,
    tolerance: float = GRADCHECK_TOLERANCE,
    out_dir: str | Path | None = None,
) -> GradcheckResult:
    """Analytic gradients versus central finite differences.

    Instances rotate through all collision variants plus the consistency
    kinematic term; each instance is redrawn while it sits near a kink of the
    energy surface. Relative error is the max-norm gradient gap over
    max(1, |analytic|, |numeric|).
    """
    from .seeding import make_rng

    if instances < 1:
        raise ValueError("instances must be >= 1")
    limits = PhysicalLimits()
    rows: list[dict] = []
    worst: dict[str, float] = {}
    failures: list[dict] = []
    for k in range(instances):
        collision_variant, kinematic_variant = GRADCHECK_VARIANTS[
            k % len(GRADCHECK_VARIANTS)
        ]
        cfg = EnergyConfig(
            limits=limits,
            collision_variant=collision_variant,
            kinematic_variant=kinematic_variant,
        )
        rng = make_rng(seed, 404, k)
        traj = _random_instance(rng, limits)
        redraws = 0
        while _near_nonsmooth_locus(traj, cfg) and redraws < 100:
            traj = _random_instance(rng, limits)
            redraws += 1
        analytic = total_energy_and_grad(traj, cfg).grad
        numeric = _finite_difference_grad(traj, cfg)
        scale = max(
            1.0,
            float(np.abs(analytic).max()),
            float(np.abs(numeric).max()),
        )
        rel = float(np.abs(analytic - numeric).max()) / scale
        variant = f"{collision_variant}+{kinematic_variant}"
        rows.append({"instance": k, "variant": variant, "rel_error": rel})
        worst[variant] = max(worst.get(variant, 0.0), rel)
        if rel >= tolerance:
            failures.append({"instance": k, "variant": variant, "rel_error": rel})
    summary = {
        "instances": instances,
        "tolerance": tolerance,
        "max_rel_error": float(max(worst.values())),
        "per_variant_max": worst,
        "n_failures": len(failures),
        "failures": failures[:20],
    }
    result = GradcheckResult(rows, summary)
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(out / "gradcheck.csv", ("instance", "variant", "rel_error"), rows)
        write_json(out / "summary.json", summary)
    return result


def random_invalid_start(
    limits: PhysicalLimits,
    seed: int,
    n_agents: int = 3,
    horizon: int = 8,
    dt: float = 0.1,
) -> Trajectory:
    """A random trajectory guaranteed to violate the collision constraint.

    Positions are drawn in a box small enough that some pair strays inside
    d_safe; draws are rejected until at least one timestep collides while no
    pair gets closer than 0.2 * d_safe, which keeps refinement gradients far
    from the explosion threshold. Velocities and accelerations stay clearly
    inside their limits so the violation is purely geometric.
    """
    from .seeding import make_rng

    rng = make_rng(seed, 505)
    side = 3.0 * limits.d_safe
    floor = 0.2 * limits.d_safe
    for _ in range(10_000):
        states = np.zeros((n_agents, horizon, 6))
        states[..., 0:2] = rng.uniform(0.0, side, (n_agents, horizon, 2))
        states[..., 2:4] = rng.uniform(-0.5, 0.5, (n_agents, horizon, 2)) * limits.v_max * 0.8
        states[..., 4:6] = rng.uniform(-0.5, 0.5, (n_agents, horizon, 2)) * limits.a_max * 0.8
        traj = Trajectory(states, dt=dt)
        dmin = min(
            float(np.linalg.norm(traj.positions[i] - traj.positions[j], axis=-1).min())
            for i in range(n_agents)
            for j in range(i + 1, n_agents)
        )
        if floor <= dmin < limits.d_safe:
            return traj
    raise RuntimeError("could not draw an invalid start; box parameters are off")
