"""Interaction graphs and grid-based pair pruning.

Agents within r_interact of each other at a timestep share an edge whose
weight combines a Gaussian distance falloff with a heading-alignment falloff.
A uniform spatial grid with cell size r_interact makes neighbor enumeration
exact: any pair closer than r_interact sits in the same or an adjacent cell.
Energy evaluation restricted to graph pairs is exact for the inverse_distance
variant whenever r_interact >= d_safe, because that variant has no support
beyond d_safe.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import AgentState, Trajectory
from .energy import EnergyConfig, _inverse_pair_term

SPEED_EPS = 1e-6


@dataclass(frozen=True)
class GraphConfig:
    r_interact: float = 30.0
    sigma_d: float = 10.0
    sigma_theta: float = math.pi / 4.0

    def __post_init__(self) -> None:
        if self.r_interact <= 0 or self.sigma_d <= 0 or self.sigma_theta <= 0:
            raise ValueError("graph parameters must be positive")


@dataclass(frozen=True)
class InteractionGraph:
    """Per-timestep undirected edge lists with weights."""

    n_agents: int
    horizon: int
    # edges[t] = (i_array, j_array, weight_array) with i < j
    edges: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    def n_edges(self, t: int) -> int:
        return len(self.edges[t][0])

    def total_edges(self) -> int:
        return sum(len(e[0]) for e in self.edges)


def _heading_angle(va: np.ndarray, vb: np.ndarray) -> float:
    """Unsigned angle in [0, pi] between velocity vectors."""
    na = math.hypot(va[0], va[1])
    nb = math.hypot(vb[0], vb[1])
    if na < SPEED_EPS or nb < SPEED_EPS:
        return 0.0
    cos = (va[0] * vb[0] + va[1] * vb[1]) / (na * nb)
    return math.acos(min(1.0, max(-1.0, cos)))


def edge_weight(a: AgentState, b: AgentState, cfg: GraphConfig) -> float:
    """Interaction weight in (0, 1] inside r_interact, exactly 0 outside."""
    d = math.hypot(a.px - b.px, a.py - b.py)
    if d >= cfg.r_interact:
        return 0.0
    angle = _heading_angle(np.array([a.vx, a.vy]), np.array([b.vx, b.vy]))
    w_dist = math.exp(-(d**2) / (2.0 * cfg.sigma_d**2))
    w_angle = math.exp(-angle / (2.0 * cfg.sigma_theta**2))
    return w_dist * w_angle


def _pairs_within_radius(pos: np.ndarray, r: float) -> list[tuple[int, int]]:
    """All pairs (i < j) with distance strictly below r, via a uniform grid."""
    n = pos.shape[0]
    cells: dict[tuple[int, int], list[int]] = {}
    keys = []
    for i in range(n):
        key = (math.floor(pos[i, 0] / r), math.floor(pos[i, 1] / r))
        keys.append(key)
        cells.setdefault(key, []).append(i)
    pairs = []
    for i in range(n):
        cx, cy = keys[i]
        xi, yi = pos[i]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                bucket = cells.get((cx + dx, cy + dy))
                if not bucket:
                    continue
                for j in bucket:
                    if j <= i:
                        continue
                    if math.hypot(pos[j, 0] - xi, pos[j, 1] - yi) < r:
                        pairs.append((i, j))
    return pairs


def build_graph(traj: Trajectory, cfg: GraphConfig) -> InteractionGraph:
    """Build the interaction graph for every timestep of a trajectory."""
    if not np.isfinite(traj.states).all():
        raise ValueError("trajectory contains non-finite states")
    edges = []
    states = traj.states
    for t in range(traj.horizon):
        pos = states[:, t, 0:2]
        pairs = _pairs_within_radius(pos, cfg.r_interact)
        ii = np.array([p[0] for p in pairs], dtype=np.int64)
        jj = np.array([p[1] for p in pairs], dtype=np.int64)
        weights = np.array(
            [
                edge_weight(
                    AgentState.from_array(states[i, t]),
                    AgentState.from_array(states[j, t]),
                    cfg,
                )
                for i, j in pairs
            ],
            dtype=np.float64,
        )
        edges.append((ii, jj, weights))
    return InteractionGraph(n_agents=traj.n_agents, horizon=traj.horizon, edges=edges)


def pruned_pair_iterator(graph: InteractionGraph, t: int) -> Iterator[tuple[int, int]]:
    """Yield the (i, j) pairs with an edge at timestep t, i < j."""
    if not 0 <= t < graph.horizon:
        raise IndexError(f"timestep {t} out of range [0, {graph.horizon})")
    ii, jj, _ = graph.edges[t]
    for i, j in zip(ii.tolist(), jj.tolist()):
        yield (i, j)


def collision_energy_pruned(traj: Trajectory, cfg: EnergyConfig, graph: InteractionGraph) -> float:
    """Inverse-distance collision energy over graph pairs only.

    Exactly equals the full evaluation when the graph radius is at least
    d_safe, since the pair term vanishes beyond d_safe.
    """
    if cfg.collision_variant != "inverse_distance":
        raise ValueError("pruned evaluation is exact only for inverse_distance")
    total = 0.0
    pos = traj.positions
    for t in range(traj.horizon):
        ii, jj, _ = graph.edges[t]
        if len(ii) == 0:
            continue
        diff = pos[ii, t] - pos[jj, t]
        dist = np.sqrt((diff**2).sum(axis=-1))
        value, _ = _inverse_pair_term(dist, cfg.limits.d_safe, cfg.d_min)
        total += float(value.sum())
    return total


def dump_edges_csv(graph: InteractionGraph, path: str | Path) -> None:
    """Debug dump of all edges as rows of t,i,j,weight."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "j", "weight"])
        for t in range(graph.horizon):
            ii, jj, ww = graph.edges[t]
            for i, j, w in zip(ii.tolist(), jj.tolist(), ww.tolist()):
                writer.writerow([t, i, j, repr(float(w))])
