"""Joint trajectory, normalizing-factor and power design for UAV-aided over-the-air computation."""

from .bcd import (STRATEGIES, SolveResult, fly_hover_trajectory, solve, solve_bcd_admm, solve_fly_hover,
                  solve_static_uav, solve_to_wo_pc)
from .scenario import Scenario, desk_scenario, load_scenario, reference_scenario

__version__ = "0.1.0"

__all__ = [
    "STRATEGIES", "Scenario", "SolveResult", "desk_scenario", "fly_hover_trajectory", "load_scenario",
    "reference_scenario", "solve", "solve_bcd_admm", "solve_fly_hover", "solve_static_uav", "solve_to_wo_pc",
]
