"""Ideal pinhole cameras.

Camera frame: +z forward, +x right, +y down. Pixel ``(i, j)`` covers the
square ``[i, i+1) x [j, j+1)`` so its center sits at ``(i + 0.5, j + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError
from .geometry import check_rotation

MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("image size must be integral")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class Extrinsics:
    """World-to-camera rigid transform ``q = R p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = check_rotation(np.array(self.rotation, dtype=float).reshape(3, 3))
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> "Extrinsics":
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        up = np.asarray(up, dtype=float)
        if abs(np.dot(up, z)) > 0.999:
            # looking along the up vector; pick any perpendicular
            up = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        x = np.cross(z, up)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        r = np.stack([x, y, z])
        return cls(rotation=r, translation=-r @ eye)


@dataclass(frozen=True, eq=False)
class View:
    """One observation: camera plus binary target silhouette of shape (H, W)."""

    intrinsics: Intrinsics
    extrinsics: Extrinsics
    target: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target, dtype=bool)
        if t.shape != self.intrinsics.shape:
            raise ValueError(
                f"target shape {t.shape} does not match image size {self.intrinsics.shape}"
            )
        object.__setattr__(self, "target", t)


def world_to_camera(e: Extrinsics, p) -> np.ndarray:
    """Map world point(s) of shape (..., 3) into the camera frame."""
    return np.asarray(p, dtype=float) @ e.rotation.T + e.translation


def camera_to_world(e: Extrinsics, q) -> np.ndarray:
    return (np.asarray(q, dtype=float) - e.translation) @ e.rotation


def project(k: Intrinsics, p_cam) -> np.ndarray:
    """Perspective projection of camera-frame point(s) to pixel ``(u, v)``.

    Raises BehindCameraError if any depth is at or below ``MIN_DEPTH``.
    """
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise BehindCameraError("point on or behind the camera plane")
    u = k.cx + k.fx * p[..., 0] / z
    v = k.cy + k.fy * p[..., 1] / z
    return np.stack([u, v], axis=-1)
