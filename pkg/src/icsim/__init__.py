"""Dual cyber/physical simulation of industrial process plants under data-integrity attacks."""

__version__ = "0.1.0"

from .engine import (  # noqa: E402
    AttackPrimitive,
    AttackScenario,
    DualState,
    Event,
    SimulationTrace,
    default_initial_state,
    initial_state_from,
    run,
    run_batch,
    step,
)
from .errors import (  # noqa: E402
    ContractViolation,
    DegenerateDenominatorError,
    IngestionError,
    InsufficientTraceError,
)
from .plant import PlantModel, load_plant, resolve_path_flow, validate_plant  # noqa: E402

__all__ = [
    "AttackPrimitive",
    "AttackScenario",
    "ContractViolation",
    "DegenerateDenominatorError",
    "DualState",
    "Event",
    "IngestionError",
    "InsufficientTraceError",
    "PlantModel",
    "SimulationTrace",
    "default_initial_state",
    "initial_state_from",
    "load_plant",
    "resolve_path_flow",
    "run",
    "run_batch",
    "step",
    "validate_plant",
]
