"""
Core functionality for QuenchLab
"""

from .domain import DomainDescriptor, DomainKind, discretize
from .spectrum import clamped_eigenpair, sobolev_constant
from .evolution import CoefficientProfile, SystemSpec, run
from .bounds import compute_bounds
from .scenarios import Scenario, ScenarioManager, load_scenario
from .verification import Verifier, verify
from .sweep import sweep
