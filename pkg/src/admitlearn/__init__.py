"""Online residual learning of admittance gains for contact-rich manipulation."""

from .adaptation import AdaptationConfig, EpisodeTrace, adaptation_loop
from .admittance import (
    AdmittanceParams,
    ErrorState,
    ParamVector,
    compliant_rollout,
    critical_damping,
    recover_gains,
    step_error_dynamics,
    to_param_vector,
)
from .cost import CostWeights, fitave, itae, trajectory_cost
from .envs import EnvConfig, Geometry, env_step, sensor_read, success_check
from .forces import ForceWindow, fit_linear_force, record, replay
from .offline import GainSearchConfig, cem_gain_search, load_baseline_gains
from .optimizer import OptProblem, OptResult, optimize_residual
from .trajectories import PlanSettings, TrajectoryPlan, scripted_trajectory

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig", "AdmittanceParams", "CostWeights", "EnvConfig", "EpisodeTrace", "ErrorState",
    "ForceWindow", "GainSearchConfig", "Geometry", "OptProblem", "OptResult", "ParamVector",
    "PlanSettings", "TrajectoryPlan", "adaptation_loop", "cem_gain_search", "compliant_rollout",
    "critical_damping", "env_step", "fit_linear_force", "fitave", "itae", "load_baseline_gains",
    "optimize_residual", "record", "recover_gains", "replay", "scripted_trajectory", "sensor_read",
    "step_error_dynamics", "success_check", "to_param_vector", "trajectory_cost",
]
