"""Meshes, similarity poses and SO(3) helpers.

Rotations are plain ``(3, 3)`` float arrays; vectors are ``(3,)`` arrays.
A pose maps a model point ``x`` to ``R @ (s * x) + t``: per-axis scale is
applied in the model frame, before rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ObjParseError

ORTHO_TOL = 1e-9


def is_rotation(r, tol: float = ORTHO_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


def check_rotation(r, tol: float = ORTHO_TOL) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if not is_rotation(r, tol):
        raise ValueError("matrix is not a rotation (orthonormal, det +1)")
    return r


@dataclass(frozen=True)
class Pose:
    """9-DoF similarity pose ``[sR|t]``."""

    scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        s = np.array(self.scale, dtype=float).reshape(3)
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError(f"scale components must be finite and > 0, got {s}")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        check_rotation(r)
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def replace(self, **kwargs) -> "Pose":
        fields = {"scale": self.scale, "rotation": self.rotation, "translation": self.translation}
        fields.update(kwargs)
        return Pose(**fields)


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(v) < 3:
            raise ValueError("mesh needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices must be finite")
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("face with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def surface_area(self) -> float:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())

    def bounding_radius(self) -> float:
        """Largest vertex distance from the model-frame origin."""
        return float(np.linalg.norm(self.vertices, axis=1).max())


def load_obj(path) -> TriMesh:
    """Read ``v`` and ``f`` records from a Wavefront OBJ file.

    Polygons are fan-triangulated around their first vertex. Normals,
    texture coordinates, groups and materials are skipped. Negative
    (relative) indices are accepted.
    """
    vertices = []
    faces = []
    face_lines = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise ObjParseError("vertex needs 3 coordinates", lineno)
                try:
                    vertices.append([float(x) for x in rest[:3]])
                except ValueError:
                    raise ObjParseError(f"bad vertex coordinate in {line!r}", lineno) from None
            elif tag == "f":
                if len(rest) < 3:
                    raise ObjParseError("face needs at least 3 vertices", lineno)
                idx = []
                for tok in rest:
                    head = tok.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ObjParseError(f"bad face index {tok!r}", lineno) from None
                    if i == 0:
                        raise ObjParseError("face index 0 is invalid (OBJ is 1-based)", lineno)
                    # relative indices refer to vertices read so far
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                for j in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[j], idx[j + 1]))
                    face_lines.append(lineno)
    n = len(vertices)
    for face, lineno in zip(faces, face_lines):
        if min(face) < 0 or max(face) >= n:
            raise ObjParseError(f"face index out of range (have {n} vertices)", lineno)
        if len(set(face)) != 3:
            raise ObjParseError("face with repeated vertex index", lineno)
    if n < 3:
        raise ObjParseError(f"need at least 3 vertices, found {n}")
    return TriMesh(np.array(vertices, dtype=float), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriMesh, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for v in mesh.vertices:
            fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*v))
        for f in mesh.faces:
            fh.write("f {} {} {}\n".format(*(f + 1)))


def transform_points(pose: Pose, points) -> np.ndarray:
    """Apply ``R @ (s * x) + t`` to each row of ``points``."""
    p = np.asarray(points, dtype=float)
    return (p * pose.scale) @ pose.rotation.T + pose.translation


def compose(a: Pose, b: Pose) -> Pose:
    """Pose equivalent to applying ``b`` then ``a``.

    Only defined when ``a`` has isotropic scale, otherwise the product is not
    a ``[sR|t]`` pose in general.
    """
    if not np.allclose(a.scale, a.scale[0], rtol=0, atol=0):
        raise ValueError("outer pose must have isotropic scale")
    sa = a.scale[0]
    return Pose(
        scale=sa * b.scale,
        rotation=a.rotation @ b.rotation,
        translation=sa * (a.rotation @ b.translation) + a.translation,
    )


def hat(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega) -> np.ndarray:
    """Rodrigues' formula for the rotation by angle ``|omega|`` about ``omega``."""
    w = np.asarray(omega, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    if theta == 0.0:
        return np.eye(3)
    k = hat(w / theta)
    r = np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)
    return r


def so3_log(r) -> np.ndarray:
    """Rotation vector of ``r`` with angle in ``[0, pi]``.

    The angle is ``arccos((trace - 1) / 2)``, evaluated as ``atan2`` of the
    skew and trace parts so it stays accurate next to 0 and pi. Three
    regimes: small angles use the first-order series of the skew part,
    generic angles normalise the skew part, and angles near pi recover the
    axis from the largest-diagonal column of ``(R + I) / 2`` because the
    skew part vanishes there.
    """
    r = np.asarray(r, dtype=float)
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    sin2 = float(np.linalg.norm(skew))  # 2 sin(theta)
    theta = math.atan2(0.5 * sin2, 0.5 * (np.trace(r) - 1.0))
    if theta < 1e-6:
        return 0.5 * skew
    if theta < np.pi - 1e-6:
        return (theta / sin2) * skew
    # near pi the symmetric part of (R + I) / 2 is n n^T + O((pi - theta)^2)
    b = 0.25 * (r + r.T) + 0.5 * np.eye(3)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.sqrt(max(b[i, i], 1e-300))
    axis /= np.linalg.norm(axis)
    # sin(theta) * n = skew / 2 fixes the sign when it is resolvable
    if np.dot(axis, skew) < 0:
        axis = -axis
    return theta * axis


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Intrinsic Z-Y-X Euler angles: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def geodesic_angle(a, b) -> float:
    """Angle of the relative rotation ``a.T @ b``, in ``[0, pi]``."""
    c = (np.trace(np.asarray(a).T @ np.asarray(b)) - 1.0) / 2.0
    return float(np.arccos(min(1.0, max(-1.0, c))))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform sample on SO(3) from a normalised Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
