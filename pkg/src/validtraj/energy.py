"""Constraint energies and their analytic gradients.

The collision energy penalizes pairs closer than d_safe; the kinematic energy
penalizes speeds above v_max (and, in the consistency variant, acceleration
magnitudes above a_max). The total energy is

    E(traj) = E_coll(traj) + lambda_kin * E_kin(traj)

and its gradient with respect to the full (n_agents, horizon, 6) state tensor
drives guided sampling. All gradients are analytic; finite differences are
used only for validation.

Four collision variants exist:

  inverse_distance    (1/d - 1/d_safe)^2 inside d_safe, 0 outside (unscaled)
  smooth_exponential  k_c * exp(-d^2 / sigma^2)
  gaussian_rbf        k_c * exp(-d^2 / (2 sigma^2))
  soft_minimum        per-timestep soft-min of pair distances pushed through
                      the inverse_distance pair term, scaled by k_c

Distances are clamped below at d_min so coincident agents produce finite
energies and zero (not NaN) gradients. At the hinge loci (d = d_safe,
speed = v_max, |a| = a_max) the subgradient of the inactive branch, zero, is
used.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import AgentState, PhysicalLimits, Trajectory

COLLISION_VARIANTS = ("inverse_distance", "smooth_exponential", "gaussian_rbf", "soft_minimum")
KINEMATIC_VARIANTS = ("speed_hinge", "consistency")

DEFAULT_D_MIN = 1e-3
DEFAULT_SOFTMIN_BETA = 10.0


@dataclass(frozen=True)
class EnergyConfig:
    """Parameters of the constraint energy.

    sigma defaults to d_safe when left as None. lambda_v / lambda_a only
    matter for the consistency kinematic variant and the consistency score.
    """

    limits: PhysicalLimits = field(default_factory=PhysicalLimits)
    collision_variant: str = "inverse_distance"
    k_c: float = 100.0
    sigma: float | None = None
    lambda_kin: float = 1.0
    lambda_v: float = 10.0
    lambda_a: float = 5.0
    kinematic_variant: str = "speed_hinge"
    d_min: float = DEFAULT_D_MIN
    softmin_beta: float = DEFAULT_SOFTMIN_BETA
    margin_tau: float = 0.5
    margin_gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.collision_variant not in COLLISION_VARIANTS:
            raise ValueError(f"unknown collision variant {self.collision_variant!r}")
        if self.kinematic_variant not in KINEMATIC_VARIANTS:
            raise ValueError(f"unknown kinematic variant {self.kinematic_variant!r}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.limits.d_safe)
        if self.k_c <= 0 or self.sigma <= 0 or self.d_min <= 0 or self.softmin_beta <= 0:
            raise ValueError("k_c, sigma, d_min and softmin_beta must be positive")
        if self.lambda_kin < 0 or self.lambda_v < 0 or self.lambda_a < 0:
            raise ValueError("term weights must be non-negative")

    def to_dict(self) -> dict:
        return {
            "collision_variant": self.collision_variant,
            "k_c": self.k_c,
            "sigma": self.sigma,
            "lambda_kin": self.lambda_kin,
            "lambda_v": self.lambda_v,
            "lambda_a": self.lambda_a,
            "kinematic_variant": self.kinematic_variant,
            "limits": {
                "d_safe": self.limits.d_safe,
                "v_max": self.limits.v_max,
                "a_max": self.limits.a_max,
            },
        }

    @staticmethod
    def from_dict(data: dict) -> "EnergyConfig":
        known = {
            k: data[k]
            for k in (
                "collision_variant",
                "k_c",
                "sigma",
                "lambda_kin",
                "lambda_v",
                "lambda_a",
                "kinematic_variant",
                "d_min",
                "softmin_beta",
                "margin_tau",
                "margin_gamma",
            )
            if k in data
        }
        limits = PhysicalLimits(**data["limits"]) if "limits" in data else PhysicalLimits()
        return EnergyConfig(limits=limits, **known)


@dataclass(frozen=True)
class EnergyReport:
    """Energy decomposition plus the full analytic gradient."""

    e_coll: float
    e_kin: float
    e_total: float
    grad: np.ndarray  # (n_agents, horizon, 6)


def _check_finite(traj: Trajectory) -> None:
    if not np.isfinite(traj.states).all():
        raise ValueError("trajectory contains non-finite states")


def _pair_geometry(traj: Trajectory):
    """Pair index arrays, difference vectors (P,T,2) and distances (P,T)."""
    iu, ju = np.triu_indices(traj.n_agents, k=1)
    diff = traj.positions[iu] - traj.positions[ju]
    dist = np.sqrt((diff**2).sum(axis=-1))
    return iu, ju, diff, dist


def _inverse_pair_term(dist: np.ndarray, d_safe: float, d_min: float):
    """Value and d-derivative of (1/d~ - 1/d_safe)^2 with support d < d_safe."""
    inside = dist < d_safe
    d_cl = np.maximum(dist, d_min)
    gap = 1.0 / d_cl - 1.0 / d_safe
    value = np.where(inside, gap**2, 0.0)
    # Clamped region is flat: no gradient below d_min.
    active = inside & (dist > d_min)
    deriv = np.where(active, -2.0 * gap / d_cl**2, 0.0)
    return value, deriv


def _logsumexp(x: np.ndarray, axis: int):
    m = np.max(x, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(x - m), axis=axis))
    return out


def _collision_value_grad(traj: Trajectory, cfg: EnergyConfig):
    """Collision energy and its gradient wrt positions, shape (N,T,2)."""
    n = traj.n_agents
    grad_pos = np.zeros((n, traj.horizon, 2))
    if n < 2:
        return 0.0, grad_pos
    iu, ju, diff, dist = _pair_geometry(traj)
    d_safe = cfg.limits.d_safe
    variant = cfg.collision_variant

    if variant == "soft_minimum":
        # One term per timestep: the soft-min of pair distances pushed
        # through the inverse pair term. Weights are the softmax of -beta*d.
        beta = cfg.softmin_beta
        s = -_logsumexp(-beta * dist, axis=0) / beta  # (T,)
        val_t, deriv_t = _inverse_pair_term(s, d_safe, cfg.d_min)
        energy = cfg.k_c * float(val_t.sum())
        shifted = -beta * dist
        shifted -= shifted.max(axis=0, keepdims=True)
        w = np.exp(shifted)
        w /= w.sum(axis=0, keepdims=True)  # (P,T)
        d_cl = np.maximum(dist, cfg.d_min)
        coeff = cfg.k_c * deriv_t[None, :] * w / d_cl  # dE/dd_p / d, per pair
        contrib = coeff[:, :, None] * diff
        np.add.at(grad_pos, iu, contrib)
        np.subtract.at(grad_pos, ju, contrib)
        return energy, grad_pos

    if variant == "inverse_distance":
        value, deriv = _inverse_pair_term(dist, d_safe, cfg.d_min)
        energy = float(value.sum())
        d_cl = np.maximum(dist, cfg.d_min)
        coeff = deriv / d_cl
    elif variant == "smooth_exponential":
        sig2 = cfg.sigma**2
        value = cfg.k_c * np.exp(-(dist**2) / sig2)
        energy = float(value.sum())
        coeff = value * (-2.0 / sig2)
    elif variant == "gaussian_rbf":
        sig2 = cfg.sigma**2
        value = cfg.k_c * np.exp(-(dist**2) / (2.0 * sig2))
        energy = float(value.sum())
        coeff = value * (-1.0 / sig2)
    else:  # pragma: no cover - guarded by EnergyConfig
        raise ValueError(variant)

    contrib = coeff[:, :, None] * diff
    np.add.at(grad_pos, iu, contrib)
    np.subtract.at(grad_pos, ju, contrib)
    return energy, grad_pos


def _hinge_value_grad(vectors: np.ndarray, bound: float):
    """sum(max(0, |v| - bound)^2) and gradient wrt the vectors."""
    norms = np.linalg.norm(vectors, axis=-1)
    excess = np.maximum(0.0, norms - bound)
    value = float((excess**2).sum())
    safe = np.maximum(norms, 1e-300)
    grad = (2.0 * excess / safe)[..., None] * vectors
    return value, grad


def collision_energy(traj: Trajectory, cfg: EnergyConfig) -> float:
    """Collision energy of the configured variant; 0 for a single agent."""
    _check_finite(traj)
    energy, _ = _collision_value_grad(traj, cfg)
    return energy


def collision_energy_smooth(traj: Trajectory, cfg: EnergyConfig) -> float:
    """Collision energy restricted to the smooth variants."""
    if cfg.collision_variant == "inverse_distance":
        raise ValueError("smooth evaluation requires a smooth collision variant")
    return collision_energy(traj, cfg)


def kinematic_energy(traj: Trajectory, limits: PhysicalLimits) -> float:
    """Quadratic hinge on speed: sum over states of max(0, |v| - v_max)^2."""
    _check_finite(traj)
    value, _ = _hinge_value_grad(traj.velocities, limits.v_max)
    return value


def kinematic_consistency_score(traj: Trajectory, cfg: EnergyConfig) -> float:
    """Weighted speed and acceleration hinge penalties (scoring variant)."""
    _check_finite(traj)
    ev, _ = _hinge_value_grad(traj.velocities, cfg.limits.v_max)
    ea, _ = _hinge_value_grad(traj.accelerations, cfg.limits.a_max)
    return cfg.lambda_v * ev + cfg.lambda_a * ea


def total_energy_and_grad(traj: Trajectory, cfg: EnergyConfig) -> EnergyReport:
    """Combined energy and its gradient over the full state tensor.

    Under the default speed_hinge kinematic variant the acceleration columns
    of the gradient are identically zero; the consistency variant populates
    them through the acceleration hinge.
    """
    _check_finite(traj)
    e_coll, grad_pos = _collision_value_grad(traj, cfg)
    grad = np.zeros_like(traj.states)
    grad[:, :, 0:2] = grad_pos

    if cfg.kinematic_variant == "speed_hinge":
        e_kin, grad_v = _hinge_value_grad(traj.velocities, cfg.limits.v_max)
        grad[:, :, 2:4] = cfg.lambda_kin * grad_v
    else:
        ev, grad_v = _hinge_value_grad(traj.velocities, cfg.limits.v_max)
        ea, grad_a = _hinge_value_grad(traj.accelerations, cfg.limits.a_max)
        e_kin = cfg.lambda_v * ev + cfg.lambda_a * ea
        grad[:, :, 2:4] = cfg.lambda_kin * cfg.lambda_v * grad_v
        grad[:, :, 4:6] = cfg.lambda_kin * cfg.lambda_a * grad_a

    e_total = e_coll + cfg.lambda_kin * e_kin
    return EnergyReport(e_coll=e_coll, e_kin=e_kin, e_total=e_total, grad=grad)


def collision_potential(a: AgentState, b: AgentState, cfg: EnergyConfig) -> float:
    """Pair potential k_c * (1/d - 1/d_safe)^2 inside d_safe, else 0."""
    d = float(np.hypot(a.px - b.px, a.py - b.py))
    value, _ = _inverse_pair_term(np.asarray(d), cfg.limits.d_safe, cfg.d_min)
    return cfg.k_c * float(value)


def repulsive_force(traj: Trajectory, i: int, t: int, cfg: EnergyConfig) -> np.ndarray:
    """Negative gradient of the summed pair potentials acting on agent i at t."""
    n = traj.n_agents
    if not 0 <= i < n:
        raise IndexError(f"agent index {i} out of range [0, {n})")
    if not 0 <= t < traj.horizon:
        raise IndexError(f"timestep {t} out of range [0, {traj.horizon})")
    force = np.zeros(2)
    pi = traj.states[i, t, 0:2]
    for j in range(n):
        if j == i:
            continue
        delta = pi - traj.states[j, t, 0:2]
        d = float(np.hypot(delta[0], delta[1]))
        _, deriv = _inverse_pair_term(np.asarray(d), cfg.limits.d_safe, cfg.d_min)
        d_cl = max(d, cfg.d_min)
        force -= cfg.k_c * float(deriv) * delta / d_cl
    return force


def adaptive_collision_score(traj: Trajectory, cfg: EnergyConfig) -> float:
    """Margin-aware collision score with a time ramp.

    Pairs are penalized when d < d_safe + margin, where the margin grows with
    relative speed (margin_tau * |v_i - v_j|), and later timesteps weigh more
    through rho(t) = 1 + margin_gamma * t / T with 1-based t.
    """
    _check_finite(traj)
    if traj.n_agents < 2:
        return 0.0
    iu, ju, _, dist = _pair_geometry(traj)
    vel = traj.velocities
    rel_speed = np.linalg.norm(vel[iu] - vel[ju], axis=-1)
    margin = cfg.margin_tau * rel_speed
    slack = np.maximum(0.0, cfg.limits.d_safe - dist + margin)
    horizon = traj.horizon
    rho = 1.0 + cfg.margin_gamma * np.arange(1, horizon + 1) / horizon
    return float((rho[None, :] * slack**2).sum())


def gradient_stability(traj_sequence: list[Trajectory], cfg: EnergyConfig) -> float:
    """Mean directional agreement of gradients along an iterate sequence.

    For consecutive iterates with nonzero gradients the cosine similarity is
    mapped to [0, 1] via (1 + cos) / 2 and averaged. Pairs touching a zero
    gradient are excluded. An all-zero sequence scores 1.0 (nothing moved, so
    nothing was unstable); a sequence with gradients but no comparable pair
    scores 0.5 (no evidence either way).
    """
    if len(traj_sequence) < 2:
        raise ValueError("need at least two iterates")
    grads = [total_energy_and_grad(traj, cfg).grad.ravel() for traj in traj_sequence]
    norms = [float(np.linalg.norm(g)) for g in grads]
    if all(n == 0.0 for n in norms):
        return 1.0
    scores = []
    for k in range(len(grads) - 1):
        if norms[k] == 0.0 or norms[k + 1] == 0.0:
            continue
        cos = float(np.dot(grads[k], grads[k + 1]) / (norms[k] * norms[k + 1]))
        cos = min(1.0, max(-1.0, cos))
        scores.append(0.5 * (1.0 + cos))
    if not scores:
        return 0.5
    return float(np.mean(scores))
