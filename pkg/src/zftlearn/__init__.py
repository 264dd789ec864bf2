"""Diffusion-based equilibrium trajectory reconstruction and adaptive
task-space impedance control, validated in a quasi-static contact simulator.
"""

from .denoiser import (DenoiserConfig, DenoiserParams, ReconstructionMetrics,
                       TrainConfig, TrajectoryWindow, metrics,
                       reconstruct_szft, train)
from .geom import Pose, PoseError, pose_error, quat_canonical, quat_exp, quat_log, slerp
from .impedance import StiffnessState, Wrench, damping_design, elastic_wrench
from .noise import NoiseSchedule, corrupt_rotation, corrupt_translation, make_schedule, snr
from .reconstructor import SZFTReconstructor
from .scenarios import BUILTIN_SCENARIOS, build_scenario, load_scenario_config
from .sim import EpisodeLog, Scenario, contact_wrench, generate_dataset, run_episode, step
from .stiffness import (DirectionalFactors, EstimatorParams, StiffnessAdapter,
                        adapt_stiffness, directional_factors, stiffness_reduction)
from .zft import Trajectory, Waypoint, generate_zft, min_jerk_scalar

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_SCENARIOS", "DenoiserConfig", "DenoiserParams",
    "DirectionalFactors", "EpisodeLog", "EstimatorParams", "NoiseSchedule",
    "Pose", "PoseError", "ReconstructionMetrics", "SZFTReconstructor",
    "Scenario", "StiffnessAdapter", "StiffnessState", "TrainConfig",
    "Trajectory", "TrajectoryWindow", "Waypoint", "Wrench",
    "adapt_stiffness", "build_scenario", "contact_wrench",
    "corrupt_rotation", "corrupt_translation", "damping_design",
    "directional_factors", "elastic_wrench", "generate_dataset",
    "generate_zft", "load_scenario_config", "make_schedule", "metrics",
    "min_jerk_scalar", "pose_error", "quat_canonical", "quat_exp",
    "quat_log", "reconstruct_szft", "run_episode", "slerp", "snr", "step",
    "stiffness_reduction", "train",
]
