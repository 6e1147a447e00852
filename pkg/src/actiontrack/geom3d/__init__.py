"""Camera model, calibration, and pixel/world geometry."""

from .calibrate import (
    ExtrinsicsFit,
    GroundControlPoint,
    IntrinsicsFit,
    PlanarView,
    calibrate_extrinsics,
    calibrate_intrinsics,
    fit_extrinsics,
    initial_extrinsics,
    fit_intrinsics,
    homography_dlt,
)
from .camera import (
    CameraExtrinsics,
    CameraIntrinsics,
    distort_normalized,
    normalized_to_pixel,
    orthonormalize,
    project,
    project_points,
    rodrigues,
    rotation_angle,
    undistort,
    undistort_points,
)
from .ground import (
    GroundLookupTable,
    GroundModel,
    Plane,
    TriangleMesh,
    backproject_points,
    backproject_to_ground,
    build_ground_lookup,
    ground_point_below,
    lookup_reprojection_error,
)

__all__ = [
    "CameraExtrinsics",
    "CameraIntrinsics",
    "ExtrinsicsFit",
    "GroundControlPoint",
    "GroundLookupTable",
    "GroundModel",
    "IntrinsicsFit",
    "PlanarView",
    "Plane",
    "TriangleMesh",
    "backproject_points",
    "backproject_to_ground",
    "build_ground_lookup",
    "calibrate_extrinsics",
    "calibrate_intrinsics",
    "distort_normalized",
    "fit_extrinsics",
    "initial_extrinsics",
    "fit_intrinsics",
    "ground_point_below",
    "homography_dlt",
    "lookup_reprojection_error",
    "normalized_to_pixel",
    "orthonormalize",
    "project",
    "project_points",
    "rodrigues",
    "rotation_angle",
    "undistort",
    "undistort_points",
]
