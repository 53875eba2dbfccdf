"""Single-letter solvers for the cooperative, persuasion, mechanism and Nash scenarios."""
from .commitment import CommitmentResult, lipschitz_constant, mechanism_value, persuasion_value
from .cooperative import CooperativeRegion, cooperative_region, distortion_rate, pareto_front
from .instance import Bracket, DistortionPair, ProblemInstance, ResourceLimitError, SolverGrid
from .nash import NashSet, certify, nash_set
from .subadditivity import SubadditivityReport, subadditivity_check

__all__ = [
    "Bracket", "CommitmentResult", "CooperativeRegion", "DistortionPair", "NashSet", "ProblemInstance",
    "ResourceLimitError", "SolverGrid", "SubadditivityReport", "certify", "cooperative_region",
    "distortion_rate", "lipschitz_constant", "mechanism_value", "nash_set", "pareto_front",
    "persuasion_value", "subadditivity_check",
]
