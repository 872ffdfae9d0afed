"""Simulation and verification of distributed optimal frequency regulation
for lossless AC networks with voltage dynamics.

The package couples a structure-preserving multi-area grid model with
consensus-based internal-model controllers, certifies the energy-decay and
optimality claims numerically, and ships scenario files reproducing a
four-area case study.
"""

from .backends import available_backends, get_backend
from .config import ConfigError, load_scenario, packaged_scenario_path, parse_scenario
from .controllers import CommGraph, Controller, ControllerState, reference_state
from .dispatch import (
    CommonBlockError,
    CostModel,
    DispatchSolution,
    compensable_projector,
    decompose_demand,
    generation_cost,
    optimal_dispatch,
    optimal_dispatch_lq,
)
from .equilibrium import (
    Equilibrium,
    EquilibriumError,
    InfeasibleError,
    acyclic_angles,
    check_security,
    check_strict_minimum,
    solve_regulator,
    sync_frequency,
)
from .exosystem import Exosystem, RotationBlock, SinusoidMode
from .network import (
    AreaParams,
    GridGraph,
    GridState,
    check_voltage_matrix_pd,
    dynamics_rhs,
    line_coupling,
    line_flows,
    voltage_matrix,
)
from .passivity import (
    closed_loop_report,
    closed_loop_rate_identity,
    kinetic_storage,
    potential_storage,
    potential_storage_grad,
    potential_storage_hessian,
)
from .sim import (
    AddDisturbance,
    DropLink,
    GaussianPulse,
    LoadStep,
    Scenario,
    ScenarioError,
    Trajectory,
    robustness_experiment,
    simulate,
    z_monotonicity,
)

__version__ = "0.1.0"

__all__ = [
    "AddDisturbance",
    "AreaParams",
    "CommGraph",
    "CommonBlockError",
    "ConfigError",
    "Controller",
    "ControllerState",
    "CostModel",
    "DispatchSolution",
    "DropLink",
    "Equilibrium",
    "EquilibriumError",
    "Exosystem",
    "GaussianPulse",
    "GridGraph",
    "GridState",
    "InfeasibleError",
    "LoadStep",
    "RotationBlock",
    "Scenario",
    "ScenarioError",
    "SinusoidMode",
    "Trajectory",
    "acyclic_angles",
    "available_backends",
    "check_security",
    "check_strict_minimum",
    "check_voltage_matrix_pd",
    "closed_loop_rate_identity",
    "closed_loop_report",
    "compensable_projector",
    "decompose_demand",
    "dynamics_rhs",
    "generation_cost",
    "get_backend",
    "kinetic_storage",
    "line_coupling",
    "line_flows",
    "load_scenario",
    "optimal_dispatch",
    "optimal_dispatch_lq",
    "packaged_scenario_path",
    "parse_scenario",
    "potential_storage",
    "potential_storage_grad",
    "potential_storage_hessian",
    "reference_state",
    "robustness_experiment",
    "simulate",
    "solve_regulator",
    "sync_frequency",
    "voltage_matrix",
    "z_monotonicity",
]
