"""Evaluation metrics for trajectory batches.

Displacement metrics compare samples against a reference trajectory;
validity metrics apply the hard physical predicates; the remaining scores
(temporal consistency, jerk, social conformity, diversity) characterize
sample quality beyond the binary predicates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PhysicalLimits, Trajectory, in_collision_set, is_kinematically_feasible, is_valid

DEFAULT_D_SOCIAL = 5.0
DIVERSITY_EPS = 1e-6


def _check_same_shape(traj: Trajectory, reference: Trajectory) -> None:
    if traj.states.shape != reference.states.shape:
        raise ValueError(
            f"shape mismatch: {traj.states.shape} vs {reference.states.shape}"
        )


def ade(traj: Trajectory, reference: Trajectory) -> float:
    """Average displacement error.

    Mean over agents and timesteps of the Euclidean position error between
    the trajectory and the reference.
    """
    _check_same_shape(traj, reference)
    err = np.linalg.norm(traj.positions - reference.positions, axis=-1)
    return float(err.mean())


def fde(traj: Trajectory, reference: Trajectory) -> float:
    """Final displacement error: mean position error at the last timestep."""
    _check_same_shape(traj, reference)
    err = np.linalg.norm(traj.positions[:, -1] - reference.positions[:, -1], axis=-1)
    return float(err.mean())


def _require_batch(samples: list[Trajectory]) -> None:
    if not samples:
        raise ValueError("empty sample batch")


def validity_rate(samples: list[Trajectory], limits: PhysicalLimits) -> float:
    """Fraction of samples that are collision-free and kinematically feasible."""
    _require_batch(samples)
    return float(np.mean([is_valid(s, limits) for s in samples]))


def collision_rate(samples: list[Trajectory], limits: PhysicalLimits) -> float:
    """Fraction of samples with at least one collision.

    A sample with several colliding pairs still counts once; see
    pair_collision_fraction for the per-pair view.
    """
    _require_batch(samples)
    return float(np.mean([in_collision_set(s, limits) for s in samples]))


def pair_collision_fraction(samples: list[Trajectory], limits: PhysicalLimits) -> float:
    """Fraction of (sample, agent pair) combinations that ever collide."""
    _require_batch(samples)
    flags = []
    for s in samples:
        n = s.n_agents
        for i in range(n):
            for j in range(i + 1, n):
                d = np.linalg.norm(s.positions[i] - s.positions[j], axis=-1)
                flags.append(bool((d < limits.d_safe).any()))
    if not flags:
        return 0.0
    return float(np.mean(flags))


def temporal_consistency(
    samples: list[Trajectory], limits: PhysicalLimits, window: int
) -> float:
    """Fraction of (sample, window) segments that are valid sub-trajectories.

    Windows are consecutive non-overlapping chunks of `window` timesteps; a
    trailing shorter chunk is kept. With window equal to the horizon this
    reduces to the validity rate.
    """
    _require_batch(samples)
    if window < 1:
        raise ValueError("window must be >= 1")
    flags = []
    for s in samples:
        if window > s.horizon:
            raise ValueError(f"window {window} exceeds horizon {s.horizon}")
        for start in range(0, s.horizon, window):
            stop = min(start + window, s.horizon)
            flags.append(is_valid(s.slice_time(start, stop), limits))
    return float(np.mean(flags))


def jerk_profile(traj: Trajectory) -> float:
    """Mean jerk magnitude from finite differences of acceleration.

    Each step boundary contributes |a_{t+1} - a_t| / dt; an acceleration step
    of 1 m/s^2 at dt = 0.1 contributes 10 m/s^3 to its boundary term.
    """
    if traj.horizon < 2:
        raise ValueError("jerk needs at least two timesteps")
    da = np.diff(traj.accelerations, axis=1) / traj.dt
    return float(np.linalg.norm(da, axis=-1).mean())


def social_conformity(traj: Trajectory, d_social: float = DEFAULT_D_SOCIAL) -> float:
    """Heading-misalignment penalty between nearby agents.

    Sum over unordered pairs and timesteps within d_social of
    (1 - cos angle(v_i, v_j)) * exp(-d / d_social). Pairs where either agent
    is at rest are treated as aligned and contribute zero.
    """
    if d_social <= 0:
        raise ValueError("d_social must be positive")
    n = traj.n_agents
    if n < 2:
        return 0.0
    pos, vel = traj.positions, traj.velocities
    iu, ju = np.triu_indices(n, k=1)
    diff = pos[iu] - pos[ju]
    dist = np.sqrt((diff**2).sum(axis=-1))
    vi, vj = vel[iu], vel[ju]
    ni = np.linalg.norm(vi, axis=-1)
    nj = np.linalg.norm(vj, axis=-1)
    moving = (ni > 1e-6) & (nj > 1e-6)
    denom = np.where(moving, ni * nj, 1.0)
    cos = np.where(moving, (vi * vj).sum(axis=-1) / denom, 1.0)
    cos = np.clip(cos, -1.0, 1.0)
    near = dist < d_social
    terms = np.where(near, (1.0 - cos) * np.exp(-dist / d_social), 0.0)
    return float(terms.sum())


def diversity_logdet(samples: list[Trajectory], sigma_k: float | None = None) -> float:
    """Log-determinant diversity of a batch under an RBF kernel.

    Samples are flattened to their position sequences; the kernel bandwidth
    defaults to the median pairwise distance between flattened samples. The
    score is -log det(K + eps I): identical samples push it up toward
    -log((m)eps)-ish values, well-separated samples drive it toward 0.
    """
    _require_batch(samples)
    if len(samples) < 2:
        raise ValueError("diversity needs at least two samples")
    shape = samples[0].states.shape
    for s in samples[1:]:
        if s.states.shape != shape:
            raise ValueError("samples must share a common shape")
    z = np.stack([s.positions.ravel() for s in samples])
    sq = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=-1)
    if sigma_k is None:
        iu = np.triu_indices(len(samples), k=1)
        med = float(np.median(np.sqrt(sq[iu])))
        sigma_k = med if med > 0 else 1.0
    if sigma_k <= 0:
        raise ValueError("sigma_k must be positive")
    kernel = np.exp(-sq / (2.0 * sigma_k**2))
    sign, logdet = np.linalg.slogdet(kernel + DIVERSITY_EPS * np.eye(len(samples)))
    if sign <= 0:  # pragma: no cover - kernel + eps I is positive definite
        raise ArithmeticError("kernel matrix lost positive definiteness")
    return float(-logdet)


def violation_breakdown(samples: list[Trajectory], limits: PhysicalLimits) -> dict[str, int]:
    """Count samples with each violation category (categories can overlap)."""
    _require_batch(samples)
    counts = {"collision": 0, "speed": 0, "acceleration": 0}
    for s in samples:
        if in_collision_set(s, limits):
            counts["collision"] += 1
        speeds = np.linalg.norm(s.velocities, axis=-1)
        accels = np.linalg.norm(s.accelerations, axis=-1)
        if (speeds > limits.v_max).any():
            counts["speed"] += 1
        if (accels > limits.a_max).any():
            counts["acceleration"] += 1
    return counts


@dataclass(frozen=True)
class SampleReport:
    """Aggregate metrics for one batch of samples against one reference."""

    n_samples: int
    validity: float
    collision: float
    ade: float
    fde: float
    temporal_consistency: float
    mean_jerk: float
    social: float
    diversity: float
    breakdown: dict[str, int]


def summarize_batch(
    samples: list[Trajectory],
    reference: Trajectory,
    limits: PhysicalLimits,
    window: int = 10,
    d_social: float = DEFAULT_D_SOCIAL,
) -> SampleReport:
    """Compute the full metric suite for a batch."""
    _require_batch(samples)
    window = min(window, samples[0].horizon)
    div = diversity_logdet(samples) if len(samples) >= 2 else 0.0
    return SampleReport(
        n_samples=len(samples),
        validity=validity_rate(samples, limits),
        collision=collision_rate(samples, limits),
        ade=float(np.mean([ade(s, reference) for s in samples])),
        fde=float(np.mean([fde(s, reference) for s in samples])),
        temporal_consistency=temporal_consistency(samples, limits, window),
        mean_jerk=float(np.mean([jerk_profile(s) for s in samples])),
        social=float(np.mean([social_conformity(s, d_social) for s in samples])),
        diversity=div,
        breakdown=violation_breakdown(samples, limits),
    )
