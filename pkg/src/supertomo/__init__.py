"""Superiorized conjugate-gradient and ART reconstruction for parallel scans.

The package splits along the data flow: linops holds the sparse matrix and
image containers, geometry builds projection matrices and phantoms, tv and
precond supply the superiorization and filtering pieces, solvers runs the
iterations, metrics scores them, and harness wires everything to files and
the command line.
"""

from .geometry import (
    EllipseSpec,
    ScanGeometry,
    Sinogram,
    build_projection_matrix,
    default_head_ellipses,
    desk_geometry,
    generate_phantom,
    read_phantom_spec,
    simulate_data,
    write_phantom_spec,
)
from .linops import (
    Image,
    SparseMatrix,
    load_matrix,
    matvec,
    normal_op,
    rmatvec,
    save_matrix,
)
from .metrics import EllipseMask, bayesian_objective, residual_f, selective_error
from .precond import (
    PreconditionerSpec,
    apply_M,
    apply_N,
    apply_N_inv_T,
    filter_value,
    m_operator,
    n_inv_t_operator,
    n_operator,
)
from .solvers import (
    ArtParams,
    CurveRecord,
    PcgState,
    RunResult,
    SolverBreakdown,
    art_sweep,
    estimate_gray_value,
    pcg_init,
    run_art,
    run_cg,
    run_pcg,
    sup_art,
    sup_cg,
    sup_pcg,
    sup_tpcg,
    u_cg,
    u_pcg,
    u_tpcg,
    uniform_prior,
)
from .tv import (
    SuperiorizationParams,
    SuperiorizationState,
    nonascending_vector,
    s_tv,
    tv_gradient,
    tv_value,
)

__version__ = "0.1.0"

__all__ = [
    "ArtParams",
    "CurveRecord",
    "EllipseMask",
    "EllipseSpec",
    "Image",
    "PcgState",
    "PreconditionerSpec",
    "RunResult",
    "ScanGeometry",
    "Sinogram",
    "SolverBreakdown",
    "SparseMatrix",
    "SuperiorizationParams",
    "SuperiorizationState",
    "apply_M",
    "apply_N",
    "apply_N_inv_T",
    "art_sweep",
    "bayesian_objective",
    "build_projection_matrix",
    "default_head_ellipses",
    "desk_geometry",
    "estimate_gray_value",
    "filter_value",
    "generate_phantom",
    "load_matrix",
    "m_operator",
    "matvec",
    "n_inv_t_operator",
    "n_operator",
    "nonascending_vector",
    "normal_op",
    "pcg_init",
    "read_phantom_spec",
    "residual_f",
    "rmatvec",
    "run_art",
    "run_cg",
    "run_pcg",
    "s_tv",
    "save_matrix",
    "selective_error",
    "simulate_data",
    "sup_art",
    "sup_cg",
    "sup_pcg",
    "sup_tpcg",
    "tv_gradient",
    "tv_value",
    "u_cg",
    "u_pcg",
    "u_tpcg",
    "uniform_prior",
    "write_phantom_spec",
]
