"""Analytic Gaussian diffusion over trajectory tensors.

The base model is a diagonal Gaussian prior centered on a constant-velocity
rollout of the scenario's initial states, with per-component-type scales
(position, velocity, acceleration). Because the prior is Gaussian and the
forward process is linear, the reverse-step mean has a closed form: estimate
the clean trajectory from the noisy iterate via the exact Gaussian posterior,
then apply the standard reverse-step combination. No learned network is
involved, which keeps every sampling experiment exactly reproducible.

Diffusion time t runs from 0 (clean) to `steps` (fully noised); the reverse
chain visits t = steps, ..., 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Scenario, Trajectory

DEFAULT_STEPS = 16
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.2
DEFAULT_TEMPERATURE = 0.8

_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule. Index 0 is the identity level (alpha_bar = 1)."""

    steps: int
    betas: np.ndarray       # (steps + 1,), betas[0] = 0
    alphas: np.ndarray      # (steps + 1,), alphas[0] = 1
    alpha_bars: np.ndarray  # (steps + 1,), alpha_bars[0] = 1

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("schedule needs at least one step")
        for name in ("betas", "alphas", "alpha_bars"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.steps + 1,):
                raise ValueError(f"{name} must have shape (steps + 1,)")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.alphas[1:] > 0).all() or not (self.alphas[1:] < 1).all():
            raise ValueError("alphas must lie strictly inside (0, 1)")
        if np.max(np.abs(self.alphas - (1.0 - self.betas))) > _CONSISTENCY_TOL:
            raise ValueError("alphas inconsistent with betas")
        if np.max(np.abs(self.alpha_bars - np.cumprod(self.alphas))) > _CONSISTENCY_TOL:
            raise ValueError("alpha_bars inconsistent with alphas")
        if not (np.diff(self.alpha_bars) < 0).all():
            raise ValueError("alpha_bars must be strictly decreasing")

    @classmethod
    def linear(
        cls,
        steps: int = DEFAULT_STEPS,
        beta_min: float = DEFAULT_BETA_MIN,
        beta_max: float = DEFAULT_BETA_MAX,
    ) -> "NoiseSchedule":
        """Linearly spaced betas from beta_min to beta_max inclusive."""
        if not 0 < beta_min <= beta_max < 1:
            raise ValueError("need 0 < beta_min <= beta_max < 1")
        betas = np.concatenate([[0.0], np.linspace(beta_min, beta_max, steps)])
        alphas = 1.0 - betas
        return cls(steps=steps, betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))

    def _check_t(self, t: int, lo: int = 0) -> None:
        if not lo <= t <= self.steps:
            raise IndexError(f"diffusion step {t} out of range [{lo}, {self.steps}]")

    def snr_weight(self, t: int) -> float:
        """Inverse residual-variance weight 1 / (1 - alpha_bar_t)."""
        self._check_t(t, lo=1)
        return float(1.0 / (1.0 - self.alpha_bars[t]))

    def posterior_sigma(self, t: int) -> float:
        """Reverse-step noise scale sqrt((1 - ab_{t-1}) / (1 - ab_t) * beta_t)."""
        self._check_t(t, lo=1)
        var = (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t]) * self.betas[t]
        return float(np.sqrt(var))


@dataclass(frozen=True)
class PriorScale:
    pos: float = 2.0
    vel: float = 1.0
    acc: float = 0.5

    def __post_init__(self) -> None:
        if self.pos <= 0 or self.vel <= 0 or self.acc <= 0:
            raise ValueError("prior scales must be positive")

    def as_state_vector(self) -> np.ndarray:
        return np.array([self.pos, self.pos, self.vel, self.vel, self.acc, self.acc])


def constant_velocity_rollout(scenario: Scenario) -> Trajectory:
    """Integrate initial velocities forward; velocities and accelerations held."""
    n, horizon = scenario.n_agents, scenario.horizon
    states = np.repeat(scenario.initial[:, None, :], horizon, axis=1).astype(np.float64)
    tgrid = np.arange(horizon) * scenario.dt
    states[:, :, 0] += scenario.initial[:, 2:3] * tgrid[None, :]
    states[:, :, 1] += scenario.initial[:, 3:4] * tgrid[None, :]
    return Trajectory(states, scenario.dt)


@dataclass(frozen=True)
class BaseModel:
    """Analytic Gaussian trajectory model used as the sampling backbone."""

    schedule: NoiseSchedule = field(default_factory=NoiseSchedule.linear)
    prior_scale: PriorScale = field(default_factory=PriorScale)
    temperature: float = DEFAULT_TEMPERATURE
    prior_mean_fn: Callable[[Scenario], Trajectory] = constant_velocity_rollout

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    def prior_mean(self, scenario: Scenario) -> Trajectory:
        return self.prior_mean_fn(scenario)

    def to_dict(self) -> dict:
        betas = self.schedule.betas[1:]
        return {
            "steps": int(self.schedule.steps),
            "beta_min": float(betas[0]),
            "beta_max": float(betas[-1]),
            "temperature": self.temperature,
            "prior_scale": {
                "pos": self.prior_scale.pos,
                "vel": self.prior_scale.vel,
                "acc": self.prior_scale.acc,
            },
        }

    @staticmethod
    def from_dict(data: dict) -> "BaseModel":
        schedule = NoiseSchedule.linear(
            steps=int(data.get("steps", DEFAULT_STEPS)),
            beta_min=float(data.get("beta_min", DEFAULT_BETA_MIN)),
            beta_max=float(data.get("beta_max", DEFAULT_BETA_MAX)),
        )
        ps = data.get("prior_scale", {})
        return BaseModel(
            schedule=schedule,
            prior_scale=PriorScale(
                pos=float(ps.get("pos", 2.0)),
                vel=float(ps.get("vel", 1.0)),
                acc=float(ps.get("acc", 0.5)),
            ),
            temperature=float(data.get("temperature", DEFAULT_TEMPERATURE)),
        )


def forward_diffuse(
    traj: Trajectory, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> Trajectory:
    """Noise a clean trajectory to diffusion level t."""
    schedule._check_t(t)
    ab = schedule.alpha_bars[t]
    noise = rng.standard_normal(traj.states.shape)
    states = np.sqrt(ab) * traj.states + np.sqrt(1.0 - ab) * noise
    return traj.with_states(states)


def _posterior_x0(noisy: np.ndarray, t: int, model: BaseModel, mean: np.ndarray) -> np.ndarray:
    """Exact Gaussian posterior mean of the clean trajectory given the iterate."""
    ab = model.schedule.alpha_bars[t]
    s2 = model.prior_scale.as_state_vector() ** 2
    if t == 0:
        return noisy.copy()
    resid = 1.0 - ab
    precision = 1.0 / s2 + ab / resid
    return (mean / s2 + np.sqrt(ab) * noisy / resid) / precision


def denoise_mean(noisy: Trajectory, t: int, model: BaseModel, scenario: Scenario) -> Trajectory:
    """Mean of the reverse kernel at step t.

    Affine in the noisy input: a fixed combination of the prior rollout and
    the iterate, with weights set by alpha_bar_t and the prior scales.
    """
    model.schedule._check_t(t, lo=1)
    sched = model.schedule
    mean = model.prior_mean(scenario).states
    x0_hat = _posterior_x0(noisy.states, t, model, mean)
    ab_t = sched.alpha_bars[t]
    ab_prev = sched.alpha_bars[t - 1]
    beta_t = sched.betas[t]
    alpha_t = sched.alphas[t]
    c0 = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    ct = np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    return noisy.with_states(c0 * x0_hat + ct * noisy.states)


def reverse_step(
    noisy: Trajectory, t: int, model: BaseModel, scenario: Scenario, rng: np.random.Generator
) -> Trajectory:
    """One stochastic reverse step: denoise mean plus tempered posterior noise."""
    mean = denoise_mean(noisy, t, model, scenario)
    sigma = model.schedule.posterior_sigma(t)
    noise = rng.standard_normal(noisy.states.shape)
    return noisy.with_states(mean.states + model.temperature * sigma * noise)


def sample_chain_init(
    model: BaseModel, scenario: Scenario, rng: np.random.Generator
) -> Trajectory:
    """Draw the chain start from the exact fully-noised marginal."""
    sched = model.schedule
    ab = sched.alpha_bars[sched.steps]
    mean = model.prior_mean(scenario).states
    s2 = model.prior_scale.as_state_vector() ** 2
    std = np.sqrt(ab * s2 + (1.0 - ab))
    noise = rng.standard_normal(mean.shape)
    return Trajectory(np.sqrt(ab) * mean + std * noise, scenario.dt)


def model_to_json(model: BaseModel) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def model_from_json(text: str) -> BaseModel:
    return BaseModel.from_dict(json.loads(text))
