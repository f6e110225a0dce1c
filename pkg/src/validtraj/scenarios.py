"""Deterministic scenario generators.

Each generator maps a ScenarioSpec to initial agent states with pairwise
separation at least d_safe, speeds inside [0, v_max], and zero initial
accelerations. Generation is fully determined by the spec's seed through the
pinned PCG64 generator, so the same spec always yields the same scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    SCENARIO_KINDS,
    Arena,
    PhysicalLimits,
    Scenario,
    ScenarioInfeasibleError,
)
from .seeding import STREAM_SCENARIO, make_rng

DEFAULT_ARENA_SIDE = 40.0
PLACEMENT_TRIES = 10_000

# intersection / merge / roundabout geometry knobs
CROSS_SPEED_RANGE = (5.0, 8.0)
CROSS_TIME_RANGE = (1.2, 1.8)   # seconds until the lead agents meet
STREAM_GAP_RANGE = (5.0, 8.0)   # headway between same-stream agents
LANE_JITTER = 0.3
MERGE_ANGLE = math.radians(20.0)
RING_RADIUS = 12.0
ENTRY_RADIUS = 20.0
URBAN_SPEED_RANGE = (2.0, 8.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Input to a generator. density_target only applies to urban_dense."""

    kind: str = "intersection"
    n_agents: int = 4
    horizon: int = 30
    dt: float = 0.1
    density_target: float | None = None
    arena_size: float | None = None
    seed: int = 0
    limits: PhysicalLimits = field(default_factory=PhysicalLimits)

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt positive")
        if self.density_target is not None and self.density_target <= 0:
            raise ValueError("density_target must be positive")
        if self.arena_size is not None and self.arena_size <= 0:
            raise ValueError("arena_size must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_agents": self.n_agents,
            "horizon": self.horizon,
            "dt": self.dt,
            "density_target": self.density_target,
            "arena_size": self.arena_size,
            "seed": self.seed,
            "limits": {
                "d_safe": self.limits.d_safe,
                "v_max": self.limits.v_max,
                "a_max": self.limits.a_max,
            },
        }

    @staticmethod
    def from_dict(data: dict) -> "ScenarioSpec":
        limits = PhysicalLimits(**data["limits"]) if "limits" in data else PhysicalLimits()
        return ScenarioSpec(
            kind=data.get("kind", "intersection"),
            n_agents=int(data.get("n_agents", 4)),
            horizon=int(data.get("horizon", 30)),
            dt=float(data.get("dt", 0.1)),
            density_target=data.get("density_target"),
            arena_size=data.get("arena_size"),
            seed=int(data.get("seed", 0)),
            limits=limits,
        )


def density(scenario: Scenario) -> float:
    """Agents per square meter of arena."""
    return scenario.n_agents / scenario.arena.area


def _check_start_separation(initial: np.ndarray, d_safe: float) -> None:
    n = initial.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(initial[i, 0] - initial[j, 0], initial[i, 1] - initial[j, 1])
            if d < d_safe:
                raise ScenarioInfeasibleError(
                    f"initial pair ({i}, {j}) separated by {d:.3f} < d_safe"
                )


def _arena_from_positions(initial: np.ndarray, horizon: int, dt: float, margin: float = 10.0) -> Arena:
    # Cover starts and constant-velocity reach with a margin.
    reach_x = initial[:, 0] + initial[:, 2] * horizon * dt
    reach_y = initial[:, 1] + initial[:, 3] * horizon * dt
    xs = np.concatenate([initial[:, 0], reach_x])
    ys = np.concatenate([initial[:, 1], reach_y])
    return Arena(
        min_x=float(xs.min() - margin),
        min_y=float(ys.min() - margin),
        max_x=float(xs.max() + margin),
        max_y=float(ys.max() + margin),
    )


def _gen_intersection(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """Two perpendicular streams timed to meet near the origin."""
    n = spec.n_agents
    t_meet = rng.uniform(*CROSS_TIME_RANGE)
    rows = []
    for k in range(n):
        stream = k % 2  # 0: eastbound, 1: northbound
        rank = k // 2   # position within the stream
        speed = rng.uniform(*CROSS_SPEED_RANGE)
        back = sum(rng.uniform(*STREAM_GAP_RANGE) for _ in range(rank))
        lead = speed * t_meet + back
        jitter = rng.uniform(-LANE_JITTER, LANE_JITTER)
        if stream == 0:
            rows.append([-lead, jitter, speed, 0.0, 0.0, 0.0])
        else:
            rows.append([jitter, -lead, 0.0, speed, 0.0, 0.0])
    return np.array(rows, dtype=np.float64)


def _gen_highway_merge(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """A main lane plus an on-ramp converging at the origin."""
    n = spec.n_agents
    n_main = (n + 1) // 2
    t_meet = rng.uniform(*CROSS_TIME_RANGE)
    rows = []
    for k in range(n):
        speed = rng.uniform(8.0, 12.0)
        if k < n_main:
            rank = k
            back = sum(rng.uniform(*STREAM_GAP_RANGE) for _ in range(rank))
            x = -(speed * t_meet + back)
            rows.append([x, rng.uniform(-LANE_JITTER, LANE_JITTER), speed, 0.0, 0.0, 0.0])
        else:
            rank = k - n_main
            back = sum(rng.uniform(*STREAM_GAP_RANGE) for _ in range(rank))
            dist = speed * t_meet + back
            dx, dy = math.cos(MERGE_ANGLE), math.sin(MERGE_ANGLE)
            rows.append([-dist * dx, -dist * dy, speed * dx, speed * dy, 0.0, 0.0])
    return np.array(rows, dtype=np.float64)


def _gen_roundabout(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """Circulating agents plus entries aimed at the ring."""
    n = spec.n_agents
    n_ring = (n + 1) // 2
    rows = []
    base = rng.uniform(0.0, 2.0 * math.pi)
    for k in range(n_ring):
        phi = base + 2.0 * math.pi * k / max(n_ring, 1)
        speed = rng.uniform(4.0, 6.0)
        px, py = RING_RADIUS * math.cos(phi), RING_RADIUS * math.sin(phi)
        # counter-clockwise tangent
        rows.append([px, py, -speed * math.sin(phi), speed * math.cos(phi), 0.0, 0.0])
    for k in range(n - n_ring):
        # aim at where ring agent k will be after t_hit seconds
        target = np.array(rows[k % n_ring], dtype=np.float64)
        t_hit = rng.uniform(1.2, 2.0)
        tx = target[0] + target[2] * t_hit
        ty = target[1] + target[3] * t_hit
        phi = base + 2.0 * math.pi * (k + 0.5) / max(n - n_ring, 1)
        sx, sy = ENTRY_RADIUS * math.cos(phi), ENTRY_RADIUS * math.sin(phi)
        vx, vy = (tx - sx) / t_hit, (ty - sy) / t_hit
        speed = math.hypot(vx, vy)
        cap = 0.9 * spec.limits.v_max
        if speed > cap:
            vx, vy = vx * cap / speed, vy * cap / speed
        rows.append([sx, sy, vx, vy, 0.0, 0.0])
    return np.array(rows, dtype=np.float64)


def _resolve_urban_geometry(spec: ScenarioSpec) -> tuple[int, float]:
    """Agent count and arena side for urban_dense.

    With both density_target and arena_size given, the agent count is derived
    from the density; with only density_target, the arena shrinks or grows
    around the requested n_agents.
    """
    if spec.density_target is None:
        side = spec.arena_size if spec.arena_size is not None else DEFAULT_ARENA_SIDE
        return spec.n_agents, side
    if spec.arena_size is not None:
        n = round(spec.density_target * spec.arena_size**2)
        if n < 1:
            raise ScenarioInfeasibleError("density target yields zero agents")
        return n, spec.arena_size
    return spec.n_agents, math.sqrt(spec.n_agents / spec.density_target)


def _gen_urban_dense(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    n, side = _resolve_urban_geometry(spec)
    half = side / 2.0
    d_safe = spec.limits.d_safe
    placed: list[list[float]] = []
    tries = 0
    while len(placed) < n:
        if tries >= PLACEMENT_TRIES:
            raise ScenarioInfeasibleError(
                f"could not place {n} agents with separation {d_safe} in a "
                f"{side:.1f} m arena after {PLACEMENT_TRIES} tries"
            )
        tries += 1
        x = rng.uniform(-half, half)
        y = rng.uniform(-half, half)
        if any(math.hypot(x - p[0], y - p[1]) < d_safe for p in placed):
            continue
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(*URBAN_SPEED_RANGE)
        speed = min(speed, spec.limits.v_max)
        placed.append([x, y, speed * math.cos(heading), speed * math.sin(heading), 0.0, 0.0])
    return np.array(placed, dtype=np.float64)


_GENERATORS = {
    "intersection": _gen_intersection,
    "highway_merge": _gen_highway_merge,
    "roundabout": _gen_roundabout,
    "urban_dense": _gen_urban_dense,
}


def generate(spec: ScenarioSpec) -> Scenario:
    """Generate the scenario for a spec. Deterministic in the spec."""
    rng = make_rng(spec.seed, STREAM_SCENARIO)
    initial = _GENERATORS[spec.kind](spec, rng)
    _check_start_separation(initial, spec.limits.d_safe)
    speeds = np.hypot(initial[:, 2], initial[:, 3])
    if (speeds > spec.limits.v_max).any():
        raise ScenarioInfeasibleError("generated initial speed exceeds v_max")
    if spec.kind == "urban_dense":
        _, side = _resolve_urban_geometry(spec)
        half = side / 2.0
        arena = Arena(-half, -half, half, half)
    else:
        arena = _arena_from_positions(initial, spec.horizon, spec.dt)
    return Scenario(
        kind=spec.kind,
        initial=initial,
        limits=spec.limits,
        arena=arena,
        seed=spec.seed,
        dt=spec.dt,
        horizon=spec.horizon,
    )


def make_head_on(
    separation: float = 18.0,
    speed: float = 6.0,
    lateral_offset: float = 0.0,
    limits: PhysicalLimits | None = None,
    dt: float = 0.1,
    horizon: int = 30,
    seed: int = 0,
) -> Scenario:
    """Two agents driving straight at each other along the x axis.

    Their constant-velocity rollouts meet at the origin halfway through
    `separation / speed` seconds; lateral_offset shifts one lane to turn the
    guaranteed deep conflict into a grazing one. Labeled as an intersection
    since the scenario taxonomy has no dedicated head-on kind.
    """
    limits = limits if limits is not None else PhysicalLimits()
    half = separation / 2.0
    initial = np.array(
        [
            [-half, 0.0, speed, 0.0, 0.0, 0.0],
            [half, lateral_offset, -speed, 0.0, 0.0, 0.0],
        ]
    )
    if separation < limits.d_safe:
        raise ScenarioInfeasibleError("head-on start separation below d_safe")
    arena = _arena_from_positions(initial, horizon, dt)
    return Scenario(
        kind="intersection",
        initial=initial,
        limits=limits,
        arena=arena,
        seed=seed,
        dt=dt,
        horizon=horizon,
    )


def make_cruise_pair(
    speed: float = 30.3,
    gap: float = 12.0,
    limits: PhysicalLimits | None = None,
    dt: float = 0.1,
    horizon: int = 3,
    seed: int = 0,
) -> Scenario:
    """Two agents cruising side by side in parallel lanes.

    The lateral gap keeps them far outside each other's safety radius, so the
    only constraint in play is the speed limit: with `speed` near (or past)
    v_max the scenario probes the kinematic boundary in isolation. Labeled
    highway_merge, the closest kind in the taxonomy.
    """
    limits = limits if limits is not None else PhysicalLimits()
    if gap < limits.d_safe:
        raise ScenarioInfeasibleError("cruise pair lanes closer than d_safe")
    initial = np.array(
        [
            [0.0, 0.0, speed, 0.0, 0.0, 0.0],
            [0.0, gap, speed, 0.0, 0.0, 0.0],
        ]
    )
    arena = _arena_from_positions(initial, horizon, dt)
    return Scenario(
        kind="highway_merge",
        initial=initial,
        limits=limits,
        arena=arena,
        seed=seed,
        dt=dt,
        horizon=horizon,
    )
