"""Complex geometric phases of two interfering resonances driven around closed loops."""
from .dynamics import DriveSchedule, EvolutionResult, adiabaticity_metric, extract_geometric_phase, propagate
from .errors import ConvergenceError, ResonantPhaseError, ValidationError
from .geometry import (
    Circle3D,
    Parametric,
    PathClass,
    PathLabel,
    PolyPath,
    SampledLoop,
    StaticPoint,
    classify_path,
    degeneracy_residual,
    diabolical_circle,
    linking_number,
    sample_loop,
    winding_number,
)
from .holonomy import (
    Method,
    PhaseResult,
    SphereMesh,
    berry_phase_discrete,
    berry_phase_line_quadrature,
    berry_phase_spherical,
    cap_phase,
    chern_sum_surface,
    chern_trace_plaquette,
    delta_gamma_path,
)
from .spectral import (
    BiorthogonalFrame,
    Defect,
    ParameterPoint,
    TwoLevelOperator,
    build_hamiltonian,
    connection_identity_residual,
    eigendecompose,
    epsilon_at,
)

__version__ = "0.1.0"
