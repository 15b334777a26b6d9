"""Multi-view silhouette refinement of 9-DoF object poses."""

from .camera import Extrinsics, Intrinsics, View, project, world_to_camera
from .errors import (
    BehindCameraError,
    ConfigError,
    DegenerateViewError,
    EmptyMaskError,
    MvposeError,
    NumericalError,
    ObjParseError,
)
from .geometry import (
    Pose,
    TriMesh,
    euler_to_rotation,
    geodesic_angle,
    load_obj,
    so3_exp,
    so3_log,
    transform_points,
)
from .losses import LossWeights, combined_loss, multiview_loss, multiview_loss_gradient
from .metrics import GraspRect, add, add_s, grasp_correct, rect_iou
from .refine import RefineConfig, RefineReport, estimate_pose, gradient_refine
from .render import SoftParams, backward_pose, render_hard_mask, render_silhouette

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError", "ConfigError", "DegenerateViewError", "EmptyMaskError",
    "Extrinsics", "GraspRect", "Intrinsics", "LossWeights", "MvposeError",
    "NumericalError", "ObjParseError", "Pose", "RefineConfig", "RefineReport",
    "SoftParams", "TriMesh", "View", "add", "add_s", "backward_pose",
    "combined_loss", "estimate_pose", "euler_to_rotation", "geodesic_angle",
    "gradient_refine", "grasp_correct", "load_obj", "multiview_loss",
    "multiview_loss_gradient", "project", "rect_iou", "render_hard_mask",
    "render_silhouette", "so3_exp", "so3_log", "transform_points", "world_to_camera",
]
