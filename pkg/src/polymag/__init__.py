"""Arbitrary-order hybrid discretization of div-curl magnetostatics on
polyhedral meshes: field and vector-potential formulations, domain topology
handling (Betti numbers, cutting surfaces), and a convergence harness."""

__version__ = "0.1.0"

from .mesh import (
    PolyMesh,
    precompute_geometry,
    generate_box_tet,
    generate_punched_box,
    generate_cavity_box,
    generate_reentrant_prism,
    agglomerate_random,
    read_mesh,
    write_mesh,
)
from .topology import (
    BoundaryComponent,
    CuttingSurface,
    TopologyInfo,
    TopologyError,
    boundary_components,
    betti_numbers,
    compute_cutting_surfaces,
    cut_betti,
    sigma_side_tags,
    analyze_topology,
)
from .local_ops import (
    CellContext,
    CondensationError,
    CondensedCell,
    LocalOperators,
    build_local_operators,
    condense,
    curl_reconstruction,
    curl_stabilizer,
    grad_reconstruction,
    grad_stabilizer,
    local_forms_field,
    local_forms_vecpot,
)
from .hybrid_spaces import (
    HybridField,
    HybridPressure,
    DofMap,
    build_dof_map,
    reduce_curl,
    reduce_grad,
    seminorm_curl,
    seminorm_grad,
)
from .assembly_solve import (
    SaddleSystem,
    Solution,
    SolveError,
    SourceData,
    assemble_field,
    assemble_vecpot,
    available_backends,
    cell_l2_norm,
    compute_errors,
    describe_dof,
    gamma_fluxes,
    pressure_l2_norm,
    pressure_mean,
    sigma_fluxes,
    solve,
)

__all__ = [
    "PolyMesh",
    "precompute_geometry",
    "generate_box_tet",
    "generate_punched_box",
    "generate_cavity_box",
    "generate_reentrant_prism",
    "agglomerate_random",
    "read_mesh",
    "write_mesh",
    "BoundaryComponent",
    "CuttingSurface",
    "TopologyInfo",
    "TopologyError",
    "boundary_components",
    "betti_numbers",
    "compute_cutting_surfaces",
    "cut_betti",
    "sigma_side_tags",
    "analyze_topology",
    "HybridField",
    "HybridPressure",
    "DofMap",
    "build_dof_map",
    "reduce_curl",
    "reduce_grad",
    "seminorm_curl",
    "seminorm_grad",
    "CellContext",
    "CondensationError",
    "CondensedCell",
    "LocalOperators",
    "build_local_operators",
    "condense",
    "curl_reconstruction",
    "curl_stabilizer",
    "grad_reconstruction",
    "grad_stabilizer",
    "local_forms_field",
    "local_forms_vecpot",
]
