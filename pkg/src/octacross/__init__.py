"""Normal-aligned octahedral frame fields on triangle meshes via convex optimization."""

__version__ = "0.1.0"

from .analysis import (
    CrossField,
    SingularityRecord,
    crease_alignment_score,
    extract_field,
    index_sum,
    normal_deviation_experiment,
    singularity_indices,
)
from .config import SolveConfig
from .energy import Problem, assemble, evaluate_energy
from .mesh import SurfaceMesh, build_mesh, load_obj, make_canonical_mesh, parse_canonical
from .sh_algebra import canonical_frame, exp_rotation, twist_z
from .solver import SolveReport, solve, solve_conic, solve_direct_p2, solve_with_degeneracy_loop
from .variety import degeneracy_distance, extract_cross, project_to_variety

__all__ = [
    "CrossField",
    "Problem",
    "SingularityRecord",
    "SolveConfig",
    "SolveReport",
    "SurfaceMesh",
    "assemble",
    "build_mesh",
    "canonical_frame",
    "crease_alignment_score",
    "degeneracy_distance",
    "evaluate_energy",
    "exp_rotation",
    "extract_cross",
    "extract_field",
    "index_sum",
    "load_obj",
    "make_canonical_mesh",
    "normal_deviation_experiment",
    "parse_canonical",
    "project_to_variety",
    "singularity_indices",
    "solve",
    "solve_conic",
    "solve_direct_p2",
    "solve_with_degeneracy_loop",
    "twist_z",
]
