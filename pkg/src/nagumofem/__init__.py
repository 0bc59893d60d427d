"""P1 finite elements for anisotropic Nagumo-type reaction-diffusion problems.

The package assembles backward Euler systems with four treatments of the
reaction term (explicit, linearized implicit and two hybrids), in
consistent or lumped form, and evaluates the mesh and time-step conditions
under which the discrete solution stays nonnegative and bounded by one.
"""

from .assembly import (
    ConfigError,
    Lumping,
    ReactionFunction,
    Treatment,
    assemble_lumped_mass,
    assemble_mass,
    assemble_reaction,
    assemble_stiffness,
    assemble_system,
    nagumo,
)
from .experiments import (
    ConvergenceTable,
    ProblemSpec,
    builtin_diffusion,
    convergence_study,
    example1,
    example2,
    example3,
    exact_solution_ex1,
    get_problem,
    scaled_l2_error,
)
from .geometry import AngleConditionReport, DiffusionField, d_acute
from .linalg import CSRPattern, IterativeSolverError, krylov_solve, matrix_properties, solve_linear
from .mesh import (
    Mesh,
    MeshParseError,
    MeshVariant,
    StructuredMeshKind,
    generate_structured_mesh,
    load_mesh,
    reorder_interior_first,
    save_mesh,
)
from .schemes import (
    ConditionViolationError,
    ConditionWindow,
    SchemeConfig,
    SimulationState,
    Stepper,
    UnsupportedAnalysisError,
    boundedness_window,
    nonnegativity_window,
    run_simulation,
    step,
)

__version__ = "0.1.0"
