"""Process-based life-cycle inventory over engineering-system nets.

Describe a system as operands, processes, and resources; expand the
allocation of processes to resources into capabilities; build incidence
matrices over (operand, buffer) pairs; then either solve the classical
inventory equations for a demand or simulate the net's discrete-time
state-transition dynamics.  The equivalence module checks that the two
views agree under the classical reduction and splits marking changes into
conversion and transportation parts.
"""

from importlib import resources as _resources
from pathlib import Path as _Path

from .equivalence import (
    AssumptionDiagnostic,
    DecompositionReport,
    DominanceVerdicts,
    EquivalenceReport,
    ReducedLca,
    check_assumptions,
    decompose_conversion_transportation,
    reduce_to_lca,
    transportation_dominance,
    verify_equivalence,
)
from .errors import (
    FileFormatError,
    HflcaError,
    ModelValidationError,
    NegativeBufferMarkingError,
    NegativeTransitionMarkingError,
    NumericalError,
    SingularTechnologyMatrixError,
)
from .esn import (
    EngineeringSystemNet,
    EsnState,
    FiringSchedule,
    Initiation,
    SimulationOptions,
    Trajectory,
    WeightOverride,
    build_net,
    explicit_schedule,
    initial_state,
    instantaneous_schedule,
    net_from_model,
    schedule_from_durations,
    simplified_step,
    simulate,
    step,
)
from .files import (
    RealizedScenario,
    ScenarioSpec,
    load_demand,
    load_firing,
    load_model,
    load_problem,
    load_scenario,
    realize_scenario,
    serialize_model,
    serialize_scenario,
)
from .incidence import (
    IncidenceStructure,
    ReducedIncidence,
    build_incidence,
    eliminate_zero_rows,
)
from .lca import (
    LcaMatrices,
    LcaSolution,
    assemble_lca,
    compute_aspects,
    demand_vector,
    matrices_from_arrays,
    solve,
    solve_lca,
    solve_scaling,
)
from .model import (
    Capability,
    CapabilitySet,
    Operand,
    Process,
    ProcessFlow,
    ProcessKind,
    Resource,
    ResourceKind,
    SystemModel,
    enumerate_capabilities,
    validate_model,
)
from .report import (
    emit_report,
    export_net_dot,
    incidence_to_json,
    matrix_to_csv,
    matrix_to_triplets,
    render,
)

__version__ = "0.1.0"


def bundled_path(name: str) -> _Path:
    """Filesystem path of a bundled example data file."""
    return _Path(str(_resources.files(__name__) / "data" / name))


__all__ = [
    "AssumptionDiagnostic",
    "Capability",
    "CapabilitySet",
    "DecompositionReport",
    "DominanceVerdicts",
    "EngineeringSystemNet",
    "EquivalenceReport",
    "EsnState",
    "FileFormatError",
    "FiringSchedule",
    "HflcaError",
    "IncidenceStructure",
    "Initiation",
    "LcaMatrices",
    "LcaSolution",
    "ModelValidationError",
    "NegativeBufferMarkingError",
    "NegativeTransitionMarkingError",
    "NumericalError",
    "Operand",
    "Process",
    "ProcessFlow",
    "ProcessKind",
    "RealizedScenario",
    "ReducedIncidence",
    "ReducedLca",
    "Resource",
    "ResourceKind",
    "ScenarioSpec",
    "SimulationOptions",
    "SingularTechnologyMatrixError",
    "SystemModel",
    "Trajectory",
    "WeightOverride",
    "assemble_lca",
    "build_incidence",
    "build_net",
    "bundled_path",
    "check_assumptions",
    "compute_aspects",
    "decompose_conversion_transportation",
    "demand_vector",
    "eliminate_zero_rows",
    "emit_report",
    "enumerate_capabilities",
    "explicit_schedule",
    "export_net_dot",
    "incidence_to_json",
    "initial_state",
    "instantaneous_schedule",
    "load_demand",
    "load_firing",
    "load_model",
    "load_problem",
    "load_scenario",
    "matrices_from_arrays",
    "matrix_to_csv",
    "matrix_to_triplets",
    "net_from_model",
    "realize_scenario",
    "reduce_to_lca",
    "render",
    "schedule_from_durations",
    "serialize_model",
    "serialize_scenario",
    "simplified_step",
    "simulate",
    "solve",
    "solve_lca",
    "solve_scaling",
    "step",
    "transportation_dominance",
    "validate_model",
    "verify_equivalence",
]
