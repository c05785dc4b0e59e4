"""CVRP laboratory: classical heuristics, local search, a toy attention policy,
decoding strategies, augmentation, random re-construct and exact oracles."""

from .core import (Feasibility, GapReport, Instance, Solution, check_feasible, evaluate_cost,
                   optimality_gap)
from .instances import GenConfig, generate, generate_many, read_instance, write_instance

__version__ = "0.1.0"

__all__ = [
    "Feasibility", "GapReport", "Instance", "Solution", "check_feasible", "evaluate_cost",
    "optimality_gap", "GenConfig", "generate", "generate_many", "read_instance", "write_instance",
]
