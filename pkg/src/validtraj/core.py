"""Core domain types and validity predicates.

A trajectory is a dense (n_agents, horizon, 6) float64 array holding
(px, py, vx, vy, ax, ay) per agent per timestep. Agents are point masses;
collision is a pairwise center-distance test against d_safe, feasibility is a
per-state bound on speed and acceleration magnitude. Validity is the
conjunction: collision-free and kinematically feasible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STATE_DIM = 6

SCENARIO_KINDS = ("intersection", "highway_merge", "roundabout", "urban_dense")


class ScenarioInfeasibleError(RuntimeError):
    """Raised when a generator cannot place agents at a feasible density."""


@dataclass(frozen=True)
class AgentState:
    """Planar point-mass state: position, velocity, acceleration."""

    px: float
    py: float
    vx: float
    vy: float
    ax: float = 0.0
    ay: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.vx, self.vy, self.ax, self.ay], dtype=np.float64)

    @staticmethod
    def from_array(row: np.ndarray) -> "AgentState":
        px, py, vx, vy, ax, ay = (float(v) for v in row)
        return AgentState(px, py, vx, vy, ax, ay)


@dataclass(frozen=True)
class PhysicalLimits:
    """Hard physical limits shared by predicates, energies, and metrics."""

    d_safe: float = 2.0
    v_max: float = 30.0
    a_max: float = 8.0

    def __post_init__(self) -> None:
        if self.d_safe <= 0 or self.v_max <= 0 or self.a_max <= 0:
            raise ValueError("physical limits must be positive")


@dataclass(frozen=True)
class Arena:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self) -> None:
        if self.max_x <= self.min_x or self.max_y <= self.min_y:
            raise ValueError("arena must have positive area")

    @property
    def area(self) -> float:
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)


@dataclass(frozen=True)
class Trajectory:
    """Immutable (n_agents, horizon, 6) state tensor with a fixed timestep."""

    states: np.ndarray
    dt: float = 0.1

    def __post_init__(self) -> None:
        arr = np.asarray(self.states, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != STATE_DIM:
            raise ValueError(f"states must have shape (n_agents, horizon, {STATE_DIM})")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("need at least one agent and one timestep")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.isfinite(arr).all():
            raise ValueError("states must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    @property
    def n_agents(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :, 0:2]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, :, 2:4]

    @property
    def accelerations(self) -> np.ndarray:
        return self.states[:, :, 4:6]

    def with_states(self, states: np.ndarray) -> "Trajectory":
        return Trajectory(states, self.dt)

    def slice_time(self, start: int, stop: int) -> "Trajectory":
        if not (0 <= start < stop <= self.horizon):
            raise ValueError("bad time slice")
        return Trajectory(self.states[:, start:stop, :], self.dt)


@dataclass(frozen=True)
class Scenario:
    """Initial conditions plus the physical context they live in."""

    kind: str
    initial: np.ndarray  # (n_agents, 6)
    limits: PhysicalLimits
    arena: Arena
    seed: int
    dt: float = 0.1
    horizon: int = 30

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        arr = np.asarray(self.initial, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != STATE_DIM or arr.shape[0] < 1:
            raise ValueError("initial must have shape (n_agents, 6) with n_agents >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("initial states must be finite")
        if self.dt <= 0 or self.horizon < 1:
            raise ValueError("dt must be positive and horizon >= 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "initial", arr)

    @property
    def n_agents(self) -> int:
        return self.initial.shape[0]

    def agent_states(self) -> list[AgentState]:
        return [AgentState.from_array(row) for row in self.initial]


# ---------------------------------------------------------------- predicates


def pairwise_distance(traj: Trajectory, i: int, j: int, t: int) -> float:
    """Euclidean center distance between agents i and j at timestep t."""
    n, horizon = traj.n_agents, traj.horizon
    if i == j:
        raise ValueError("pairwise distance of an agent with itself is undefined")
    for idx, bound in ((i, n), (j, n), (t, horizon)):
        if not 0 <= idx < bound:
            raise IndexError(f"index {idx} out of range [0, {bound})")
    delta = traj.states[i, t, 0:2] - traj.states[j, t, 0:2]
    return float(np.hypot(delta[0], delta[1]))


def _pair_distances(traj: Trajectory) -> np.ndarray:
    """Distances for all unordered pairs, shape (n_pairs, horizon)."""
    pos = traj.positions
    iu, ju = np.triu_indices(traj.n_agents, k=1)
    diff = pos[iu] - pos[ju]
    return np.sqrt((diff**2).sum(axis=-1))


def min_pair_distance(traj: Trajectory) -> float:
    """Smallest pairwise distance over all timesteps; inf for a single agent."""
    if traj.n_agents < 2:
        return float("inf")
    return float(_pair_distances(traj).min())


def in_collision_set(traj: Trajectory, limits: PhysicalLimits) -> bool:
    """True iff any pair comes strictly closer than d_safe at any timestep."""
    if traj.n_agents < 2:
        return False
    return bool((_pair_distances(traj) < limits.d_safe).any())


def is_kinematically_feasible(traj: Trajectory, limits: PhysicalLimits) -> bool:
    """True iff every speed <= v_max and every acceleration magnitude <= a_max.

    The bounds are non-strict: a state exactly at the limit is feasible.
    """
    speeds = np.linalg.norm(traj.velocities, axis=-1)
    accels = np.linalg.norm(traj.accelerations, axis=-1)
    return bool((speeds <= limits.v_max).all() and (accels <= limits.a_max).all())


def is_valid(traj: Trajectory, limits: PhysicalLimits) -> bool:
    return not in_collision_set(traj, limits) and is_kinematically_feasible(traj, limits)


def timestep_validity(traj: Trajectory, limits: PhysicalLimits) -> np.ndarray:
    """Boolean per-timestep validity (no collision, kinematics in bounds at t)."""
    ok_speed = np.linalg.norm(traj.velocities, axis=-1) <= limits.v_max
    ok_acc = np.linalg.norm(traj.accelerations, axis=-1) <= limits.a_max
    ok = ok_speed.all(axis=0) & ok_acc.all(axis=0)
    if traj.n_agents >= 2:
        ok &= ~(_pair_distances(traj) < limits.d_safe).any(axis=0)
    return ok


# ------------------------------------------------------------- serialization


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "kind": scenario.kind,
        "seed": int(scenario.seed),
        "limits": {
            "d_safe": scenario.limits.d_safe,
            "v_max": scenario.limits.v_max,
            "a_max": scenario.limits.a_max,
        },
        "dt": scenario.dt,
        "horizon": int(scenario.horizon),
        "arena": {
            "min_x": scenario.arena.min_x,
            "min_y": scenario.arena.min_y,
            "max_x": scenario.arena.max_x,
            "max_y": scenario.arena.max_y,
        },
        "agents": [[float(v) for v in row] for row in scenario.initial],
    }


def scenario_from_dict(data: dict) -> Scenario:
    limits = PhysicalLimits(**data["limits"])
    arena = Arena(**data["arena"])
    return Scenario(
        kind=data["kind"],
        initial=np.asarray(data["agents"], dtype=np.float64),
        limits=limits,
        arena=arena,
        seed=int(data["seed"]),
        dt=float(data["dt"]),
        horizon=int(data["horizon"]),
    )


def scenario_to_json(scenario: Scenario) -> str:
    """Canonical JSON encoding; identical scenarios encode byte-identically."""
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def scenario_from_json(text: str) -> Scenario:
    return scenario_from_dict(json.loads(text))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario_to_json(scenario), encoding="utf-8")


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_json(Path(path).read_text(encoding="utf-8"))
