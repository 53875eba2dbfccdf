"""Strategic communication over noisy channels with mismatched distortions."""
from .channel import CapacityResult, bsc, capacity, h2
from .prob import Distribution, JointDistribution, Kernel, ValidationError
from .scenarios import (ProblemInstance, SolverGrid, cooperative_region, mechanism_value, nash_set,
                        persuasion_value, subadditivity_check)

__version__ = "0.1.0"

__all__ = [
    "CapacityResult", "Distribution", "JointDistribution", "Kernel", "ProblemInstance", "SolverGrid",
    "ValidationError", "bsc", "capacity", "cooperative_region", "h2", "mechanism_value", "nash_set",
    "persuasion_value", "subadditivity_check",
]
