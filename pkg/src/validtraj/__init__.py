"""Energy-guided multi-agent trajectory sampling with physical validity constraints."""

from .core import (
    AgentState,
    Arena,
    PhysicalLimits,
    Scenario,
    ScenarioInfeasibleError,
    Trajectory,
    in_collision_set,
    is_kinematically_feasible,
    is_valid,
    load_scenario,
    pairwise_distance,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
)
from .diffusion import (
    BaseModel,
    NoiseSchedule,
    PriorScale,
    constant_velocity_rollout,
    denoise_mean,
    forward_diffuse,
    reverse_step,
)
from .energy import (
    EnergyConfig,
    EnergyReport,
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
from .graph import (
    GraphConfig,
    InteractionGraph,
    build_graph,
    collision_energy_pruned,
    edge_weight,
    pruned_pair_iterator,
)
from .metrics import (
    SampleReport,
    ade,
    collision_rate,
    diversity_logdet,
    fde,
    jerk_profile,
    social_conformity,
    summarize_batch,
    temporal_consistency,
    validity_rate,
    violation_breakdown,
)
from .sampler import (
    GradientExplosionError,
    GuidanceSchedule,
    RejectionResult,
    SamplerDiagnostics,
    detect_gradient_explosion,
    guidance_strength,
    guided_reverse_step,
    langevin_refine,
    rejection_sample,
    sample,
    unguided_sample,
)
from .scenarios import ScenarioSpec, density, generate, make_cruise_pair, make_head_on

__version__ = "0.1.0"
