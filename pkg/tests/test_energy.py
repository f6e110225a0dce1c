import numpy as np
import pytest

from validtraj.core import AgentState, PhysicalLimits, Trajectory
from validtraj.energy import (
    COLLISION_VARIANTS,
    EnergyConfig,
    adaptive_collision_score,
    collision_energy,
    collision_energy_smooth,
    collision_potential,
    gradient_stability,
    kinematic_consistency_score,
    kinematic_energy,
    repulsive_force,
    total_energy_and_grad,
)
from validtraj.seeding import make_rng

LIMITS = PhysicalLimits(d_safe=2.0, v_max=30.0, a_max=8.0)


def _pair_at(distance, horizon=1):
    states = np.zeros((2, horizon, 6))
    states[1, :, 0] = distance
    return Trajectory(states)


def _fd_grad(traj, cfg, h=1e-6):
    """Independent central-difference oracle over the full state tensor."""
    base = traj.states
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        step = h * max(1.0, abs(base[idx]))
        plus, minus = base.copy(), base.copy()
        plus[idx] += step
        minus[idx] -= step
        ep = total_energy_and_grad(Trajectory(plus, traj.dt), cfg).e_total
        em = total_energy_and_grad(Trajectory(minus, traj.dt), cfg).e_total
        grad[idx] = (ep - em) / (2.0 * step)
    return grad


# ---------------------------------------------------------------- hand values


def test_inverse_distance_hand_value():
    # d = 1, d_safe = 2: (1/1 - 1/2)^2 = 0.25 per timestep
    cfg = EnergyConfig(limits=LIMITS)
    assert collision_energy(_pair_at(1.0, horizon=3), cfg) == pytest.approx(0.75)
    assert collision_energy(_pair_at(2.0), cfg) == 0.0
    assert collision_energy(_pair_at(7.0), cfg) == 0.0


def test_smooth_variants_hand_values():
    d = 1.5
    smooth = EnergyConfig(limits=LIMITS, collision_variant="smooth_exponential")
    rbf = EnergyConfig(limits=LIMITS, collision_variant="gaussian_rbf")
    assert collision_energy(_pair_at(d), smooth) == pytest.approx(100.0 * np.exp(-d**2 / 4.0))
    assert collision_energy(_pair_at(d), rbf) == pytest.approx(100.0 * np.exp(-d**2 / 8.0))
    # smooth variants have support beyond d_safe
    assert collision_energy(_pair_at(5.0), smooth) > 0.0


def test_smooth_only_helper_rejects_inverse():
    with pytest.raises(ValueError):
        collision_energy_smooth(_pair_at(1.0), EnergyConfig(limits=LIMITS))
    cfg = EnergyConfig(limits=LIMITS, collision_variant="gaussian_rbf")
    assert collision_energy_smooth(_pair_at(1.0), cfg) > 0


def test_soft_minimum_bounds_single_pair():
    # with one pair the soft-min equals the distance, so the energy matches
    # k_c times the inverse pair term exactly
    cfg = EnergyConfig(limits=LIMITS, collision_variant="soft_minimum")
    inv = EnergyConfig(limits=LIMITS)
    got = collision_energy(_pair_at(1.0), cfg)
    assert got == pytest.approx(cfg.k_c * collision_energy(_pair_at(1.0), inv))


def test_soft_minimum_dominates_true_minimum():
    # softmin_beta pulls s below the true min distance; the inverse term is
    # decreasing in d, so the per-timestep energy is >= the true-min term
    rng = make_rng(41)
    cfg = EnergyConfig(limits=LIMITS, collision_variant="soft_minimum")
    for _ in range(10):
        states = np.zeros((4, 3, 6))
        states[..., 0:2] = rng.uniform(0.0, 3.0, (4, 3, 2))
        traj = Trajectory(states)
        dists = [
            np.linalg.norm(traj.positions[i] - traj.positions[j], axis=-1)
            for i in range(4)
            for j in range(i + 1, 4)
        ]
        dmin = np.stack(dists).min(axis=0)
        floor = sum(
            (1.0 / max(d, cfg.d_min) - 1.0 / LIMITS.d_safe) ** 2 if d < LIMITS.d_safe else 0.0
            for d in dmin
        )
        assert collision_energy(traj, cfg) >= cfg.k_c * floor - 1e-9


def test_kinematic_energy_hand_value():
    states = np.zeros((1, 2, 6))
    states[0, 0, 2] = 31.0  # one state 1 m/s over the limit
    traj = Trajectory(states)
    assert kinematic_energy(traj, LIMITS) == pytest.approx(1.0)
    states[0, 0, 2] = 29.0
    assert kinematic_energy(Trajectory(states), LIMITS) == 0.0


def test_total_energy_composition():
    cfg = EnergyConfig(limits=LIMITS, lambda_kin=2.0)
    states = np.zeros((2, 1, 6))
    states[1, 0, 0] = 1.0
    states[0, 0, 2] = 31.0
    report = total_energy_and_grad(Trajectory(states), cfg)
    assert report.e_coll == pytest.approx(0.25)
    assert report.e_kin == pytest.approx(1.0)
    assert report.e_total == pytest.approx(0.25 + 2.0 * 1.0)


def test_collision_potential_and_repulsive_force():
    cfg = EnergyConfig(limits=LIMITS, k_c=100.0)
    a = AgentState(0.0, 0.0, 0.0, 0.0)
    b = AgentState(1.0, 0.0, 0.0, 0.0)
    assert collision_potential(a, b, cfg) == pytest.approx(100.0 * 0.25)
    # deriv of (1/d - 1/2)^2 at d=1 is -2*(0.5)/1 = -1; force on agent 0 is
    # -k_c * deriv * delta / d = 100 * (-1, 0) pointing away from agent 1
    traj = _pair_at(1.0)
    force = repulsive_force(traj, 0, 0, cfg)
    np.testing.assert_allclose(force, [-100.0, 0.0])
    np.testing.assert_allclose(repulsive_force(traj, 1, 0, cfg), [100.0, 0.0])
    with pytest.raises(IndexError):
        repulsive_force(traj, 2, 0, cfg)


def test_adaptive_collision_score_hand_value():
    # two static agents at d=1, d_safe=2, zero velocity: slack=1, and the
    # ramp over T=2 with gamma=1 is (1.5 + 2.0) = 3.5
    cfg = EnergyConfig(limits=LIMITS, margin_tau=0.5, margin_gamma=1.0)
    assert adaptive_collision_score(_pair_at(1.0, horizon=2), cfg) == pytest.approx(3.5)
    # margin grows with relative speed: moving agents are penalized earlier
    states = _pair_at(2.5).states.copy()
    states[0, 0, 2], states[1, 0, 2] = 3.0, -3.0
    assert adaptive_collision_score(Trajectory(states), cfg) > 0.0


def test_kinematic_consistency_score_weights():
    cfg = EnergyConfig(limits=LIMITS, lambda_v=10.0, lambda_a=5.0, kinematic_variant="consistency")
    states = np.zeros((1, 1, 6))
    states[0, 0, 2] = 31.0
    states[0, 0, 4] = 9.0
    got = kinematic_consistency_score(Trajectory(states), cfg)
    assert got == pytest.approx(10.0 * 1.0 + 5.0 * 1.0)


# ------------------------------------------------------------------ gradients


@pytest.mark.parametrize("variant", COLLISION_VARIANTS)
def test_gradients_match_finite_differences(variant):
    rng = make_rng(17, COLLISION_VARIANTS.index(variant))
    cfg = EnergyConfig(limits=LIMITS, collision_variant=variant)
    for _ in range(4):
        states = np.zeros((3, 2, 6))
        states[..., 0:2] = rng.uniform(-3.0, 3.0, (3, 2, 2))
        states[..., 2:4] = rng.uniform(-40.0, 40.0, (3, 2, 2))
        traj = Trajectory(states)
        analytic = total_energy_and_grad(traj, cfg).grad
        numeric = _fd_grad(traj, cfg)
        scale = max(1.0, np.abs(analytic).max())
        assert np.abs(analytic - numeric).max() / scale < 1e-5


def test_consistency_variant_populates_acceleration_columns():
    cfg = EnergyConfig(limits=LIMITS, kinematic_variant="consistency")
    states = np.zeros((1, 1, 6))
    states[0, 0, 4] = 9.0
    grad = total_energy_and_grad(Trajectory(states), cfg).grad
    assert grad[0, 0, 4] != 0.0
    hinge_only = EnergyConfig(limits=LIMITS)
    grad2 = total_energy_and_grad(Trajectory(states), hinge_only).grad
    np.testing.assert_array_equal(grad2[:, :, 4:6], 0.0)


def test_coincident_agents_finite_energy_zero_gradient():
    cfg = EnergyConfig(limits=LIMITS)
    traj = _pair_at(0.0)
    report = total_energy_and_grad(traj, cfg)
    assert np.isfinite(report.e_total)
    assert report.e_coll == pytest.approx((1.0 / cfg.d_min - 0.5) ** 2)
    np.testing.assert_array_equal(report.grad, 0.0)


def test_nonfinite_states_rejected():
    traj = _pair_at(1.0)
    # Trajectory construction already blocks NaN; energy re-checks defensively
    # through the same entry point, so just confirm the error type is stable.
    with pytest.raises(ValueError):
        Trajectory(np.full((1, 1, 6), np.inf))


# ------------------------------------------------------------------ stability


def test_gradient_stability_extremes():
    cfg = EnergyConfig(limits=LIMITS)
    colliding = _pair_at(1.0)
    assert gradient_stability([colliding, colliding, colliding], cfg) == pytest.approx(1.0)
    far = _pair_at(10.0)
    assert gradient_stability([far, far], cfg) == 1.0  # all-zero gradients
    # zero / nonzero alternation leaves no comparable pair: neutral 0.5
    assert gradient_stability([far, colliding, far], cfg) == 0.5
    with pytest.raises(ValueError):
        gradient_stability([far], cfg)


def test_gradient_stability_detects_sign_flips():
    cfg = EnergyConfig(limits=LIMITS)
    a = _pair_at(1.90)
    b = _pair_at(2.10)  # outside support: zero gradient for inverse variant
    smooth = EnergyConfig(limits=LIMITS, collision_variant="smooth_exponential")
    seq = [a, b, a, b, a]
    assert gradient_stability(seq, smooth) > gradient_stability(seq, cfg)


# -------------------------------------------------------------------- config


def test_energy_config_validation():
    with pytest.raises(ValueError):
        EnergyConfig(limits=LIMITS, collision_variant="magnetic")
    with pytest.raises(ValueError):
        EnergyConfig(limits=LIMITS, kinematic_variant="holonomic")
    with pytest.raises(ValueError):
        EnergyConfig(limits=LIMITS, k_c=0.0)
    with pytest.raises(ValueError):
        EnergyConfig(limits=LIMITS, lambda_kin=-1.0)


def test_sigma_defaults_to_d_safe():
    cfg = EnergyConfig(limits=PhysicalLimits(d_safe=3.5))
    assert cfg.sigma == 3.5
    assert EnergyConfig(limits=LIMITS, sigma=1.25).sigma == 1.25


def test_energy_config_dict_round_trip():
    cfg = EnergyConfig(
        limits=PhysicalLimits(d_safe=2.5, v_max=20.0, a_max=6.0),
        collision_variant="gaussian_rbf",
        k_c=50.0,
        sigma=1.5,
        lambda_kin=0.7,
    )
    again = EnergyConfig.from_dict(cfg.to_dict())
    assert again == cfg
