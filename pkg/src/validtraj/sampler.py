"""Energy-guided sampling.

A guided reverse step perturbs the base reverse step with the scaled energy
gradient evaluated at the current iterate:

    next = reverse_step(iterate, t) - lambda(t) * grad E(iterate)

lambda(t) follows one of four schedule families and is largest at the start
of the reverse chain (t = steps), where trajectory structure forms. Gradient
explosions, in the sense of a gradient norm at or above c_crit / sqrt(step
size), abort the sample unless a clip norm is configured; aborts are the
observable failure mode at high density, not something to silence.

Also here: Langevin refinement of existing trajectories against the same
energy, and the rejection-sampling baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import PhysicalLimits, Scenario, Trajectory, is_valid
from .diffusion import BaseModel, reverse_step, sample_chain_init
from .energy import EnergyConfig, total_energy_and_grad
from .seeding import STREAM_CHAIN, STREAM_LANGEVIN, make_rng

SCHEDULE_FAMILIES = ("constant", "linear", "quadratic", "exponential")

DEFAULT_LAMBDA0 = 0.1
DEFAULT_C_CRIT = 1e3
DEFAULT_MAX_ATTEMPTS = 1000


class GradientExplosionError(RuntimeError):
    """Raised when a guided step hits a non-finite or above-threshold gradient."""

    def __init__(self, step: int, grad_norm: float, threshold: float):
        self.step = step
        self.grad_norm = grad_norm
        self.threshold = threshold
        super().__init__(
            f"gradient explosion at step {step}: |grad| = {grad_norm:.6g} "
            f">= threshold {threshold:.6g}"
        )


@dataclass(frozen=True)
class GuidanceSchedule:
    """Guidance strength profile over diffusion time."""

    family: str = "quadratic"
    lambda0: float = DEFAULT_LAMBDA0
    exponent: float = 2.0

    def __post_init__(self) -> None:
        if self.family not in SCHEDULE_FAMILIES:
            raise ValueError(f"unknown schedule family {self.family!r}")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be non-negative")
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")

    def to_dict(self) -> dict:
        return {
            "schedule_family": self.family,
            "lambda0": self.lambda0,
            "exponent": self.exponent,
        }

    @staticmethod
    def from_dict(data: dict) -> "GuidanceSchedule":
        return GuidanceSchedule(
            family=data.get("schedule_family", "quadratic"),
            lambda0=float(data.get("lambda0", DEFAULT_LAMBDA0)),
            exponent=float(data.get("exponent", 2.0)),
        )


def guidance_strength(t: int, total: int, sched: GuidanceSchedule) -> float:
    """lambda(t) for diffusion step t in [0, total]."""
    if total < 1:
        raise ValueError("total steps must be >= 1")
    if not 0 <= t <= total:
        raise IndexError(f"step {t} out of range [0, {total}]")
    frac = t / total
    if sched.family == "constant":
        return sched.lambda0
    if sched.family == "linear":
        return sched.lambda0 * frac
    if sched.family == "quadratic":
        return sched.lambda0 * frac**sched.exponent
    return sched.lambda0 * float(np.exp(frac - 1.0))


@dataclass
class SamplerDiagnostics:
    """Per-run traces recorded by the samplers."""

    grad_norms: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    step_count: int = 0
    explosion_flag: bool = False
    abort_step: int | None = None
    attempts: int = 1


def _explosion_threshold(step_size: float, c_crit: float) -> float:
    if step_size <= 0.0:
        return float("inf")
    return c_crit / float(np.sqrt(step_size))


def _guard_gradient(
    grad: np.ndarray,
    step_size: float,
    step_index: int,
    c_crit: float,
    clip_grad_norm: float | None,
    diag: SamplerDiagnostics,
) -> np.ndarray:
    """Record the gradient norm, then abort or clip on explosion."""
    norm = float(np.linalg.norm(grad))
    diag.grad_norms.append(norm)
    threshold = _explosion_threshold(step_size, c_crit)
    if not np.isfinite(norm):
        diag.explosion_flag = True
        diag.abort_step = step_index
        raise GradientExplosionError(step_index, norm, threshold)
    if norm >= threshold:
        diag.explosion_flag = True
        if clip_grad_norm is None:
            diag.abort_step = step_index
            raise GradientExplosionError(step_index, norm, threshold)
        if norm > clip_grad_norm:
            grad = grad * (clip_grad_norm / norm)
    elif clip_grad_norm is not None and norm > clip_grad_norm:
        grad = grad * (clip_grad_norm / norm)
    return grad


def guided_reverse_step(
    noisy: Trajectory,
    t: int,
    model: BaseModel,
    cfg: EnergyConfig,
    sched: GuidanceSchedule,
    scenario: Scenario,
    rng: np.random.Generator,
    *,
    c_crit: float = DEFAULT_C_CRIT,
    clip_grad_norm: float | None = None,
    diag: SamplerDiagnostics | None = None,
) -> tuple[Trajectory, SamplerDiagnostics]:
    """One reverse step with energy guidance evaluated at the current iterate."""
    diag = diag if diag is not None else SamplerDiagnostics()
    lam = guidance_strength(t, model.schedule.steps, sched)
    report = total_energy_and_grad(noisy, cfg)
    diag.energies.append(report.e_total)
    diag.step_sizes.append(lam)
    grad = _guard_gradient(report.grad, lam, t, c_crit, clip_grad_norm, diag)
    base = reverse_step(noisy, t, model, scenario, rng)
    diag.step_count += 1
    if lam == 0.0:
        return base, diag
    return base.with_states(base.states - lam * grad), diag


def sample(
    scenario: Scenario,
    model: BaseModel,
    cfg: EnergyConfig,
    sched: GuidanceSchedule,
    seed: int,
    *,
    c_crit: float = DEFAULT_C_CRIT,
    clip_grad_norm: float | None = None,
    attempt: int = 0,
) -> tuple[Trajectory, SamplerDiagnostics]:
    """Run the full guided reverse chain from the fully-noised marginal.

    For a fixed seed the base noise stream is identical for every guidance
    configuration, so guided and unguided runs are exactly paired; with
    lambda0 = 0 the output is bit-identical to the unguided chain.
    """
    rng = make_rng(seed, STREAM_CHAIN, attempt)
    diag = SamplerDiagnostics()
    iterate = sample_chain_init(model, scenario, rng)
    for t in range(model.schedule.steps, 0, -1):
        iterate, diag = guided_reverse_step(
            iterate,
            t,
            model,
            cfg,
            sched,
            scenario,
            rng,
            c_crit=c_crit,
            clip_grad_norm=clip_grad_norm,
            diag=diag,
        )
    return iterate, diag


def unguided_sample(
    scenario: Scenario,
    model: BaseModel,
    cfg: EnergyConfig,
    seed: int,
    *,
    attempt: int = 0,
) -> tuple[Trajectory, SamplerDiagnostics]:
    """Base-model sample: the guided chain with guidance switched off."""
    sched = GuidanceSchedule(family="constant", lambda0=0.0)
    return sample(scenario, model, cfg, sched, seed, attempt=attempt)


def langevin_refine(
    traj: Trajectory,
    cfg: EnergyConfig,
    step_sizes: float | Sequence[float],
    iterations: int,
    rng: np.random.Generator | None = None,
    *,
    deterministic: bool = False,
    c_crit: float = DEFAULT_C_CRIT,
    clip_grad_norm: float | None = None,
    seed: int | None = None,
) -> tuple[Trajectory, SamplerDiagnostics]:
    """Refine a trajectory by noisy gradient descent on the energy.

    Update: x <- x - eta_k * grad E(x) + sqrt(2 * eta_k) * xi. A scalar
    step_sizes value eta0 expands to the decreasing schedule eta0 / k with
    1-based k; a sequence is used as given and must cover `iterations`.
    With deterministic=True the noise term is dropped, which makes the energy
    trace monotone non-increasing for small enough steps.
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    if np.isscalar(step_sizes):
        etas = float(step_sizes) / np.arange(1, iterations + 1)
    else:
        etas = np.asarray(step_sizes, dtype=np.float64)
        if len(etas) < iterations:
            raise ValueError("step_sizes shorter than iteration count")
        etas = etas[:iterations]
    if iterations and not (etas > 0).all():
        raise ValueError("step sizes must be positive")
    if rng is None:
        rng = make_rng(seed if seed is not None else 0, STREAM_LANGEVIN)

    diag = SamplerDiagnostics()
    report = total_energy_and_grad(traj, cfg)
    diag.energies.append(report.e_total)
    states = traj.states.copy()
    for k in range(iterations):
        eta = float(etas[k])
        grad = _guard_gradient(report.grad, eta, k, c_crit, clip_grad_norm, diag)
        states = states - eta * grad
        if not deterministic:
            states = states + np.sqrt(2.0 * eta) * rng.standard_normal(states.shape)
        traj = traj.with_states(states)
        report = total_energy_and_grad(traj, cfg)
        diag.energies.append(report.e_total)
        diag.step_sizes.append(eta)
        diag.step_count += 1
    return traj, diag


def detect_gradient_explosion(
    diag: SamplerDiagnostics, c_crit: float, eta: float | Sequence[float]
) -> bool:
    """True iff any recorded gradient norm crosses c_crit / sqrt(eta_k)."""
    norms = np.asarray(diag.grad_norms, dtype=np.float64)
    if norms.size == 0:
        return False
    if np.isscalar(eta):
        etas = np.full(norms.shape, float(eta))
    else:
        etas = np.asarray(eta, dtype=np.float64)
        if etas.shape != norms.shape:
            raise ValueError("eta sequence must match the number of recorded steps")
    if (etas < 0).any():
        raise ValueError("step sizes must be non-negative")
    thresholds = np.where(etas > 0, c_crit / np.sqrt(np.maximum(etas, 1e-300)), np.inf)
    return bool((~np.isfinite(norms)).any() or (norms >= thresholds).any())


@dataclass(frozen=True)
class RejectionResult:
    """Outcome of rejection sampling; trajectory is None on exhaustion."""

    trajectory: Trajectory | None
    attempts: int
    succeeded: bool
    diagnostics: SamplerDiagnostics


def rejection_sample(
    scenario: Scenario,
    model: BaseModel,
    limits: PhysicalLimits,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    seed: int = 0,
    predicate: Callable[[Trajectory], bool] | None = None,
) -> RejectionResult:
    """Draw unguided samples until one is accepted or attempts run out.

    Acceptance defaults to full physical validity; pass `predicate` to accept
    on another criterion (for example an energy sublevel set). Attempt k
    consumes the noise stream (seed, k-1), so the first attempt is exactly the
    unguided sample for that seed. Exhaustion returns an explicit failure
    result rather than raising.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if predicate is None:
        predicate = lambda traj: is_valid(traj, limits)
    cfg = EnergyConfig(limits=limits)
    last_diag = SamplerDiagnostics()
    for attempt in range(max_attempts):
        traj, diag = unguided_sample(scenario, model, cfg, seed, attempt=attempt)
        diag.attempts = attempt + 1
        last_diag = diag
        if predicate(traj):
            return RejectionResult(traj, attempt + 1, True, diag)
    return RejectionResult(None, max_attempts, False, last_diag)
