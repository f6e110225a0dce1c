"""Command line entry points.

Subcommands mirror the library's benchmark operations:

    generate-scenario   write a scenario to canonical JSON
    sample              draw one trajectory, dump CSV + metrics
    compare             paired-seed method comparison
    ablate-schedule     guided sampling across schedule families
    scaling             all-pairs vs grid-pruned energy timing
    failure-sweep       guided sampling across agent densities
    gradcheck           analytic vs finite-difference gradients

Every subcommand takes --config / --seed / --out / --workers. Report paths
write CSVs and JSON summaries plus PNG figures; --no-figures skips the
figures. Failures print one JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import figures
from .core import is_valid, in_collision_set, load_scenario, save_scenario
from .diffusion import constant_velocity_rollout
from .experiments import (
    FAILURE_DENSITIES,
    METHODS,
    SCALING_AGENT_COUNTS,
    ExperimentConfig,
    _draw,
    load_experiment_config,
    run_comparison,
    run_failure_sweep,
    run_gradcheck,
    run_scaling_study,
    run_schedule_ablation,
    write_csv,
    write_json,
)
from .sampler import SCHEDULE_FAMILIES
from .scenarios import generate

TRAJECTORY_COLUMNS = ("agent", "t", "x", "y", "vx", "vy", "ax", "ay")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        return load_experiment_config(args.config)
    return ExperimentConfig()


def _scenario_seed_override(config: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return config
    return replace(config, scenario=replace(config.scenario, seed=seed))


def _trajectory_rows(traj) -> list[dict]:
    rows = []
    for i in range(traj.n_agents):
        for t in range(traj.horizon):
            x, y, vx, vy, ax, ay = traj.states[i, t]
            rows.append(
                {
                    "agent": i,
                    "t": t,
                    "x": float(x),
                    "y": float(y),
                    "vx": float(vx),
                    "vy": float(vy),
                    "ax": float(ax),
                    "ay": float(ay),
                }
            )
    return rows


def _cmd_generate_scenario(args: argparse.Namespace) -> int:
    config = _scenario_seed_override(_load_config(args), args.seed)
    spec = config.scenario
    overrides = {
        "kind": args.kind,
        "n_agents": args.agents,
        "horizon": args.horizon,
        "dt": args.dt,
        "density_target": args.density,
        "arena_size": args.arena_size,
    }
    spec = replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    scenario = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out / "scenario.json")
    if not args.no_figures:
        rollout = constant_velocity_rollout(scenario)
        figures.plot_trajectory(
            rollout, scenario, out / "scenario.png", title=f"{scenario.kind} prior rollout"
        )
    print(out / "scenario.json")
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.scenario is not None:
        scenario = load_scenario(args.scenario)
    else:
        scenario = generate(config.scenario)
    seed = args.seed if args.seed is not None else 0
    traj, diag = _draw(args.method, scenario, config, seed)
    if traj is None:
        raise RuntimeError(
            f"{args.method} sampling produced no trajectory for seed {seed}"
        )
    out = Path(args.out)
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, _trajectory_rows(traj))
    payload = {
        "method": args.method,
        "seed": seed,
        "kind": scenario.kind,
        "n_agents": traj.n_agents,
        "horizon": traj.horizon,
        "validity": float(is_valid(traj, scenario.limits)),
        "collision": float(in_collision_set(traj, scenario.limits)),
        "diagnostics": {
            "steps": diag.step_count,
            "attempts": diag.attempts,
            "explosion": int(diag.explosion_flag),
            "max_grad_norm": max(diag.grad_norms) if diag.grad_norms else None,
            "final_energy": diag.energies[-1] if diag.energies else None,
        },
    }
    write_json(out / "sample.json", payload)
    if not args.no_figures:
        figures.plot_trajectory(
            traj, scenario, out / "trajectory.png", title=f"{args.method}, seed {seed}"
        )
    print(out / "trajectory.csv")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config = _scenario_seed_override(_load_config(args), args.seed)
    scenario = generate(config.scenario)
    out = Path(args.out)
    result = run_comparison(scenario, config, out_dir=out, workers=args.workers)
    if not args.no_figures:
        figures.plot_method_comparison(result.summary, out / "comparison.png")
        if result.temporal:
            figures.plot_temporal_validity(result.temporal, out / "temporal_validity.png")
    print(out / "summary.json")
    return 0


def _cmd_ablate_schedule(args: argparse.Namespace) -> int:
    config = _scenario_seed_override(_load_config(args), args.seed)
    scenario = generate(config.scenario)
    out = Path(args.out)
    result = run_schedule_ablation(
        scenario, config, families=args.families, out_dir=out, workers=args.workers
    )
    if not args.no_figures:
        figures.plot_schedule_ablation(result.summary, out / "ablation.png")
    print(out / "summary.json")
    return 0


def _cmd_scaling(args: argparse.Namespace) -> int:
    out = Path(args.out)
    result = run_scaling_study(
        agent_counts=args.agents,
        reps=args.reps,
        seed=args.seed if args.seed is not None else 0,
        out_dir=out,
    )
    if not args.no_figures:
        figures.plot_scaling(result.summary, out / "scaling.png")
    print(out / "summary.json")
    return 0


def _cmd_failure_sweep(args: argparse.Namespace) -> int:
    config = _scenario_seed_override(_load_config(args), args.seed)
    out = Path(args.out)
    result = run_failure_sweep(
        config, densities=args.densities, out_dir=out, workers=args.workers
    )
    if not args.no_figures:
        figures.plot_failure_sweep(result.summary, out / "failure_sweep.png")
    print(out / "summary.json")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    out = Path(args.out)
    result = run_gradcheck(
        instances=args.instances,
        seed=args.seed if args.seed is not None else 0,
        tolerance=args.tolerance,
        out_dir=out,
    )
    if not args.no_figures:
        figures.plot_gradcheck(result.rows, args.tolerance, out / "gradcheck.png")
    print(out / "summary.json")
    if result.summary["n_failures"]:
        raise RuntimeError(
            f"{result.summary['n_failures']} instance(s) exceeded the "
            f"{args.tolerance:g} gradient tolerance"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="experiment config JSON")
    common.add_argument("--seed", type=int, default=None, help="override the base seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument(
        "--no-figures", action="store_true", help="write CSV/JSON only, skip PNGs"
    )

    parser = argparse.ArgumentParser(
        prog="validtraj",
        description="physically valid multi-agent trajectory sampling benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate-scenario", parents=[common], help="write a scenario to canonical JSON"
    )
    p.add_argument("--kind", default=None, help="scenario kind")
    p.add_argument("--agents", type=int, default=None, help="number of agents")
    p.add_argument("--horizon", type=int, default=None, help="timesteps")
    p.add_argument("--dt", type=float, default=None, help="timestep length [s]")
    p.add_argument("--density", type=float, default=None, help="urban density target")
    p.add_argument("--arena-size", type=float, default=None, help="urban arena side [m]")
    p.set_defaults(handler=_cmd_generate_scenario)

    p = sub.add_parser("sample", parents=[common], help="draw one trajectory")
    p.add_argument("--method", choices=METHODS, default="guided")
    p.add_argument("--scenario", type=Path, default=None, help="scenario JSON to load")
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("compare", parents=[common], help="paired-seed method comparison")
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser(
        "ablate-schedule", parents=[common], help="guided sampling per schedule family"
    )
    p.add_argument(
        "--families",
        type=lambda s: tuple(s.split(",")),
        default=SCHEDULE_FAMILIES,
        help="comma-separated schedule families",
    )
    p.set_defaults(handler=_cmd_ablate_schedule)

    p = sub.add_parser("scaling", parents=[common], help="energy evaluation timing study")
    p.add_argument(
        "--agents", type=_int_list, default=SCALING_AGENT_COUNTS,
        help="comma-separated agent counts",
    )
    p.add_argument("--reps", type=int, default=5, help="timed repetitions per size")
    p.set_defaults(handler=_cmd_scaling)

    p = sub.add_parser(
        "failure-sweep", parents=[common], help="guided sampling across densities"
    )
    p.add_argument(
        "--densities", type=_float_list, default=FAILURE_DENSITIES,
        help="comma-separated densities [agents/m^2]",
    )
    p.set_defaults(handler=_cmd_failure_sweep)

    p = sub.add_parser(
        "gradcheck", parents=[common], help="analytic vs finite-difference gradients"
    )
    p.add_argument("--instances", type=int, default=200, help="random instances")
    p.add_argument("--tolerance", type=float, default=1e-4, help="relative error bound")
    p.set_defaults(handler=_cmd_gradcheck)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except Exception as err:
        print(
            json.dumps({"error": type(err).__name__, "message": str(err)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
