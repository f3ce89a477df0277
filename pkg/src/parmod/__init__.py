"""Constant-orientation workspace tools for a three-leg parallel module."""

from importlib import resources

__version__ = "0.1.0"

from .constraints import (  # noqa: F401
    AxisBox,
    ConstraintReport,
    admissible,
    closure_half_ok,
    in_base_joint_limits,
    in_platform_joint_limits,
    in_rod_reach,
    interference_box,
)
from .errors import (  # noqa: F401
    AmbiguityError,
    ConfigError,
    EmptyBoxError,
    NoSolutionError,
    ParmodError,
    TopologyError,
    ValidationError,
)
from .export import (  # noqa: F401
    MeshParams,
    MeshSurface,
    build_boundary_mesh,
    write_ply,
    write_point_cloud,
    write_slice_svg,
)
from .geometry import (  # noqa: F401
    JointLimitProfile,
    JointMount,
    MachineGeometry,
    RigidTransform,
    attachment_points,
    base_joint_frame,
    beta_max_at,
    geometry_hash,
    load_machine_config,
    load_machine_file,
)
from .kinematics import (  # noqa: F401
    ActuatorState,
    CouplingEllipse,
    IKResult,
    Pose,
    coupling_ellipse,
    coupling_residual,
    inverse_kinematics,
    joint_angles_from_rod,
    max_tilt,
    rod_residual,
    solve_alpha,
    spherical_joint_point,
    tool_point,
)
from .sweep import (  # noqa: F401
    Classification,
    PointCloud,
    SliceSet,
    SweepParams,
    ValidationReport,
    WorkspaceSlice,
    classify_z,
    estimate_slice_area,
    estimate_volume,
    oracle_membership,
    slice_at,
    sweep,
    validate_against_oracle,
)


def g0_config_path() -> str:
    """Path to the bundled G0 reference machine configuration."""
    return str(resources.files("parmod").joinpath("data/g0.cfg"))
