"""Combined fine-scale / localized-orthogonal-decomposition solver for
2D elliptic problems with rough coefficients and localized singularities.

The domain splits into a refined region, meshed at the fine scale and
solved with plain P1 elements, and its complement, handled on a coarse
mesh whose basis is corrected by localized fine-scale solves.  The two
regions are glued along the interface with an interior-penalty form.
"""

from .assembly import (
    DEFAULT_PENALTY,
    AssemblyError,
    DofLayout,
    SaddleFactorization,
    SolverError,
    assemble_interface_terms,
    assemble_load,
    assemble_load_dirac,
    assemble_operator,
    assemble_volume_stiffness,
    broken_energy_norm,
    error_report,
    export_matrix,
    jump_seminorm,
    l2_norm,
    max_vertex_norm,
    mesh_dependent_norm,
    solve_spd,
)
from .coefficients import (
    ChannelLayout,
    CoefficientError,
    Constant,
    GridField,
    RandomFieldParams,
    build_channel_field,
    export_grid_field,
    generate_lognormal_field,
    import_grid_field,
    periodic_ratio_field,
    periodic_well_field,
    sample_per_element,
)
from .correctors import (
    MultiscaleBasis,
    MultiscaleSetup,
    build_multiscale_basis,
    choose_L,
    corrector_decay,
    corrector_rhs,
    export_correctors,
    local_corrector_problem,
    saturation_level,
    solve_local_corrector,
)
from .experiments import (
    DESK_FINEST,
    ExperimentError,
    ExperimentReport,
    channel_layout,
    effective_config,
    fit_convergence_slope,
    list_experiments,
    load_config,
    run_experiment,
)
from .mesh import (
    L_SHAPE,
    UNIT_SQUARE,
    Domain,
    DomainPartition,
    MeshError,
    TriMesh,
    build_uniform_tri_mesh,
    combined_element,
    element_patch,
    export_mesh,
    export_partition,
    partition_domain,
)
from .methods import (
    IDEAL_DOF_LIMIT,
    PointLoad,
    SolveResult,
    VolumeLoad,
    Well,
    WellSpec,
    compute_wbp,
    export_solution,
    point_value,
    solve_fe_lodm,
    solve_ideal,
    solve_lodm_baseline,
    solve_reference,
    transfer_fine_values,
    wbp_report,
)
from .transfer import (
    ClementWeights,
    build_clement_weights,
    build_injection,
    clement_interpolate,
    constraint_rows,
    patch_interior_dofs,
)

__version__ = "0.1.0"
