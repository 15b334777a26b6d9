"""On-disk formats: scene manifests, pose files, PGM masks and grasp lists.

All JSON is UTF-8. Floats are written with 17 significant digits, which
round-trips every double, so write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .camera import Extrinsics, Intrinsics, View
from .errors import EmptyMaskError, MvposeError
from .geometry import Pose, is_rotation, load_obj
from .metrics import GraspRect


class InputError(MvposeError, ValueError):
    """A user-supplied file is missing or malformed."""


# -- JSON ----------------------------------------------------------------------


def format_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x!r}")
    s = format(x, ".17g")
    # keep floats recognisable as floats
    if all(c not in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with fixed float formatting; short numeric lists stay on one line."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_scalar(v) for v in seq) + "]"
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    return _scalar(obj)


def _scalar(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8", newline="\n")


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _field(obj, key, where):
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    if key not in obj:
        raise InputError(f"{where}: missing field {key!r}")
    return obj[key]


def _vector(value, n, where) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{where}: expected {n} numbers") from None
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise InputError(f"{where}: expected {n} finite numbers")
    return a


def _matrix3(value, where) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{where}: expected a 3x3 array") from None
    if a.shape != (3, 3) or not np.all(np.isfinite(a)):
        raise InputError(f"{where}: expected a 3x3 array of finite numbers")
    return a


def _rotation(value, where) -> np.ndarray:
    r = _matrix3(value, where)
    if not is_rotation(r):
        raise InputError(f"{where}: not a rotation matrix (orthonormal, det +1)")
    return r


# -- poses ---------------------------------------------------------------------


def pose_to_dict(pose: Pose) -> dict:
    return {
        "s": pose.scale.tolist(),
        "R": pose.rotation.tolist(),
        "t": pose.translation.tolist(),
    }


def pose_from_dict(d, where="pose") -> Pose:
    s = _vector(_field(d, "s", where), 3, f"{where}: field 's'")
    if np.any(s <= 0):
        raise InputError(f"{where}: field 's': scale components must be > 0")
    r = _rotation(_field(d, "R", where), f"{where}: field 'R'")
    t = _vector(_field(d, "t", where), 3, f"{where}: field 't'")
    return Pose(s, r, t)


def write_pose(path, pose: Pose) -> None:
    write_json(path, pose_to_dict(pose))


def read_pose(path) -> Pose:
    return pose_from_dict(read_json(path), where=str(path))


# -- PGM masks -----------------------------------------------------------------


def write_pgm(path, image) -> None:
    """Binary 8-bit PGM (P5)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if img.dtype != np.uint8:
        raise ValueError("PGM image must be uint8")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def _pgm_tokens(data: bytes, count: int, path):
    """Split the header into ``count`` tokens, skipping comments; return tokens and data offset."""
    tokens, i, n = [], 0, len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise InputError(f"{path}: truncated PGM header")
        tokens.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    tokens, offset = _pgm_tokens(data, 4, path)
    if tokens[0] != b"P5":
        raise InputError(f"{path}: not a binary PGM (P5) file")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise InputError(f"{path}: malformed PGM header") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 256:
        raise InputError(f"{path}: unsupported PGM size or depth")
    raster = data[offset : offset + w * h]
    if len(raster) != w * h:
        raise InputError(f"{path}: PGM raster is truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def mask_to_pgm(mask) -> np.ndarray:
    return np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)


def soft_to_pgm(image) -> np.ndarray:
    return np.rint(255.0 * np.clip(image, 0.0, 1.0)).astype(np.uint8)


def pgm_to_mask(img) -> np.ndarray:
    return np.asarray(img) >= 128


# -- scene manifests -----------------------------------------------------------


def _resolve(base: Path, rel, where) -> Path:
    if not isinstance(rel, str) or not rel:
        raise InputError(f"{where}: expected a path string")
    p = Path(rel)
    return p if p.is_absolute() else base / p


def load_scene(path):
    """Read a manifest; returns ``(mesh, views)``.

    Mask paths and the mesh path are relative to the manifest's directory.
    Views whose mask is empty are rejected since the object is not visible.
    """
    path = Path(path)
    doc = read_json(path)
    base = path.parent
    where = str(path)
    mesh_path = _resolve(base, _field(doc, "mesh", where), f"{where}: field 'mesh'")
    if not mesh_path.exists():
        raise InputError(f"{mesh_path}: file not found")
    mesh = load_obj(mesh_path)
    entries = _field(doc, "views", where)
    if not isinstance(entries, list) or not entries:
        raise InputError(f"{where}: field 'views' must be a nonempty list")
    views = []
    for i, entry in enumerate(entries):
        vw = f"{where}: views[{i}]"
        k = _field(entry, "intrinsics", vw)
        try:
            intr = Intrinsics(*(_field(k, name, f"{vw}.intrinsics") for name in ("fx", "fy", "cx", "cy", "width", "height")))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{vw}.intrinsics: {exc}") from None
        e = _field(entry, "extrinsics", vw)
        rot = _rotation(_field(e, "R", f"{vw}.extrinsics"), f"{vw}.extrinsics.R")
        t = _vector(_field(e, "t", f"{vw}.extrinsics"), 3, f"{vw}.extrinsics.t")
        mask_path = _resolve(base, _field(entry, "mask", vw), f"{vw}.mask")
        mask = pgm_to_mask(read_pgm(mask_path))
        if mask.shape != intr.shape:
            raise InputError(f"{mask_path}: mask is {mask.shape[1]}x{mask.shape[0]}, intrinsics say {intr.width}x{intr.height}")
        if not mask.any():
            raise EmptyMaskError(f"{mask_path}: object not visible (empty mask)")
        views.append(View(intr, Extrinsics(rot, t), mask))
    return mesh, views


def view_entry(view: View, mask_name: str) -> dict:
    k = view.intrinsics
    return {
        "mask": mask_name,
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height},
        "extrinsics": {"R": view.extrinsics.rotation.tolist(), "t": view.extrinsics.translation.tolist()},
    }


def write_scene(directory, mesh_name: str, views, mask_names) -> Path:
    """Write ``scene.json`` and the target masks into ``directory``."""
    directory = Path(directory)
    entries = []
    for view, name in zip(views, mask_names):
        write_pgm(directory / name, mask_to_pgm(view.target))
        entries.append(view_entry(view, name))
    path = directory / "scene.json"
    write_json(path, {"mesh": mesh_name, "views": entries})
    return path


# -- grasp rectangles ----------------------------------------------------------


def grasp_to_dict(g: GraspRect) -> dict:
    return {
        "center": list(g.center),
        "width": g.width,
        "height": g.height,
        "angle_deg": math.degrees(g.angle),
    }


def write_grasps(path, grasps) -> None:
    write_json(path, [grasp_to_dict(g) for g in grasps])


def read_grasps(path) -> list[GraspRect]:
    doc = read_json(path)
    if not isinstance(doc, list):
        raise InputError(f"{path}: expected a JSON list of grasp rectangles")
    out = []
    for i, d in enumerate(doc):
        where = f"{path}: entry {i}"
        center = _vector(_field(d, "center", where), 2, f"{where}: field 'center'")
        vals = {}
        for name in ("width", "height", "angle_deg"):
            v = _field(d, name, where)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InputError(f"{where}: field {name!r}: expected a finite number")
            vals[name] = float(v)
        if vals["width"] <= 0 or vals["height"] <= 0:
            raise InputError(f"{where}: width and height must be > 0")
        out.append(GraspRect(tuple(center), vals["width"], vals["height"], math.radians(vals["angle_deg"])))
    return out
