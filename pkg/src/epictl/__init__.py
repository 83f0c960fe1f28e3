"""Stochastic SIR with a dynamic infection rate: simulation, closed-form
lock-down / vaccination controls and immunity-stratified contact networks."""

__version__ = "0.1.0"

from .model import (Controls, ModelParams, StateVector, cost_integrand, diffusion, drift, incidence,
                    validate_params)
from .sim import SimConfig, SimPath, Ensemble, simulate_path, simulate_ensemble, ensemble_stats, step_euler_maruyama
from .control import (evolve_transition_function, f_tilde, feynman_kac_estimate, find_steady_state, g_value,
                      optimal_controls, optimal_lockdown, optimal_vaccination)
from .network import ImmunityNetwork, density, generate_er, modularity, run_updates, update_step
from .measures import tv_all
from .experiments import load_config, preset_table1, preset_uk2021, run_experiment

__all__ = [
    "Controls", "ModelParams", "StateVector", "cost_integrand", "diffusion", "drift", "incidence",
    "validate_params", "SimConfig", "SimPath", "Ensemble", "simulate_path", "simulate_ensemble",
    "ensemble_stats", "step_euler_maruyama", "evolve_transition_function", "f_tilde",
    "feynman_kac_estimate", "find_steady_state", "g_value", "optimal_controls", "optimal_lockdown",
    "optimal_vaccination", "ImmunityNetwork", "density", "generate_er", "modularity", "run_updates",
    "update_step", "tv_all", "load_config", "preset_table1", "preset_uk2021", "run_experiment",
]
