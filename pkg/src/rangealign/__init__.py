"""Range-based coordinate alignment for cooperative mobile sensor networks.

Estimate the rotation and translation mapping each GPS-denied node's local
frame into the global frame, from noisy node-to-node range measurements.
Ships batch, recursive and distributed solvers, a scenario simulator, and a
benchmark CLI (``rangealign``).
"""

from ._kernels import available_backends, default_backend
from .geometry import (
    Pose,
    SphereSurface,
    apply_pose,
    project_onto_rotation_group,
    project_onto_sphere,
    project_onto_spheres,
    random_rotation,
    rotation_2d,
)
from .metrics import pose_errors, position_error, rotation_error, translation_error
from .multi_node import (
    DppaResult,
    IdentifiabilityError,
    MultiState,
    NetworkDataset,
    NetworkSnapshot,
    NormalEquations,
    PoseSet,
    ProjectionSet,
    assemble_normal_equations,
    dppa_solve,
    jacobi_iterate,
    jacobi_update,
    multi_objective,
    multi_ppa_solve,
    ppa_multi_iterate,
    project_all,
    project_edges,
    solve_unconstrained_ls,
    union_connected_targets,
)
from .simulate import (
    GroundTruth,
    Scenario,
    check_union_connectivity,
    generate_network,
    generate_two_node,
    load_scenario,
    save_scenario,
    sec5c_scenario,
    sigma_from_snr,
)
from .two_node import (
    GdState,
    MeasurementRecord,
    PpaState,
    RpaState,
    StoppingRule,
    TwoNodeDataset,
    gd_baseline_step,
    gd_solve,
    objective,
    ppa_master_update,
    ppa_project_step,
    ppa_solve,
    ppa_solve_restarts,
    rpa_init,
    rpa_run,
    rpa_smoothed_step,
    rpa_step,
)

__version__ = "0.1.0"
