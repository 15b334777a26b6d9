"""Builtin analytic meshes, each centred on its bounding box and scaled to unit bounding radius."""

from __future__ import annotations

import numpy as np

from .geometry import TriMesh


def _normalise(vertices, faces) -> TriMesh:
    v = np.asarray(vertices, dtype=float)
    v = v - 0.5 * (v.min(axis=0) + v.max(axis=0))
    v = v / np.linalg.norm(v, axis=1).max()
    return TriMesh(v, np.asarray(faces, dtype=np.int64))


def _merge(*parts):
    verts, faces, offset = [], [], 0
    for v, f in parts:
        verts.append(np.asarray(v, dtype=float))
        faces.append(np.asarray(f, dtype=np.int64) + offset)
        offset += len(v)
    return np.vstack(verts), np.vstack(faces)


def _grid_faces(rows, cols, wrap_cols=True, offset=0):
    """Quad strips over a (rows x cols) vertex grid, split into triangles."""
    faces = []
    ncol = cols if wrap_cols else cols - 1
    for r in range(rows - 1):
        for c in range(ncol):
            a = offset + r * cols + c
            b = offset + r * cols + (c + 1) % cols
            d = offset + (r + 1) * cols + c
            e = offset + (r + 1) * cols + (c + 1) % cols
            faces.append((a, b, e))
            faces.append((a, e, d))
    return faces


def cube() -> TriMesh:
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [t for q in quads for t in ((q[0], q[1], q[2]), (q[0], q[2], q[3]))]
    return _normalise(v, faces)


def icosphere(level: int = 2) -> TriMesh:
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(level):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return _normalise(np.array(verts), faces)


def _tube_along(path, radius, segments):
    """Closed tube: rings of ``segments`` vertices around each path point, capped."""
    path = np.asarray(path, dtype=float)
    n = len(path)
    tangents = np.gradient(path, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1)[:, None]
    ref = np.array([0.0, 0.0, 1.0])
    rings = []
    ang = 2 * np.pi * np.arange(segments) / segments
    for p, tg, r in zip(path, tangents, radius):
        a = np.cross(tg, ref)
        if np.linalg.norm(a) < 1e-6:
            a = np.cross(tg, [1.0, 0.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(tg, a)
        rings.append(p + r * (np.cos(ang)[:, None] * a + np.sin(ang)[:, None] * b))
    verts = np.vstack(rings)
    faces = _grid_faces(n, segments)
    start = len(verts)
    verts = np.vstack([verts, path[0], path[-1]])
    for c in range(segments):
        faces.append((start, (c + 1) % segments, c))
        last = (n - 1) * segments
        faces.append((start + 1, last + c, last + (c + 1) % segments))
    return verts, faces


def banana(segments: int = 12, rings: int = 24) -> TriMesh:
    """A capsule bent along a circular arc, with tapered ends."""
    theta = np.linspace(-0.9, 0.9, rings)
    arc_r = 1.4
    path = np.stack([arc_r * np.sin(theta), arc_r * (1 - np.cos(theta)), np.zeros_like(theta)], axis=1)
    u = np.linspace(-1, 1, rings)
    radius = 0.42 * np.sqrt(np.clip(1 - u**6, 0.05, None))
    v, f = _tube_along(path, radius, segments)
    return _normalise(v, f)


def _cylinder(radius, z0, z1, segments):
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    v = np.vstack(
        [
            np.column_stack([ring, np.full(segments, z0)]),
            np.column_stack([ring, np.full(segments, z1)]),
            [[0, 0, z0], [0, 0, z1]],
        ]
    )
    f = _grid_faces(2, segments)
    b, t = 2 * segments, 2 * segments + 1
    for c in range(segments):
        f.append((b, (c + 1) % segments, c))
        f.append((t, segments + c, segments + (c + 1) % segments))
    return v, f


def _torus(major, minor, center, major_seg, minor_seg):
    u = 2 * np.pi * np.arange(major_seg) / major_seg
    w = 2 * np.pi * np.arange(minor_seg) / minor_seg
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    z = (major + minor * np.cos(ww)) * np.sin(uu)
    y = minor * np.sin(ww)
    v = np.stack([x, y, z], axis=-1).reshape(-1, 3) + np.asarray(center)
    faces = []
    for i in range(major_seg):
        for j in range(minor_seg):
            a = i * minor_seg + j
            b = i * minor_seg + (j + 1) % minor_seg
            c = ((i + 1) % major_seg) * minor_seg + j
            d = ((i + 1) % major_seg) * minor_seg + (j + 1) % minor_seg
            faces += [(a, b, d), (a, d, c)]
    return v, faces


def mug(segments: int = 32) -> TriMesh:
    """Closed cylinder with a torus handle on the +x side."""
    body = _cylinder(0.5, -0.6, 0.6, segments)
    handle = _torus(0.32, 0.08, (0.62, 0.0, 0.0), 20, 8)
    return _normalise(*_merge(body, handle))


def bowl(segments: int = 24, rings: int = 8) -> TriMesh:
    """Hemispherical shell opening towards +z."""
    def cap(radius):
        phis = np.linspace(0.5 * np.pi, np.pi, rings + 1)[:-1]  # rim .. near pole
        ang = 2 * np.pi * np.arange(segments) / segments
        pts = [
            (radius * np.sin(p) * np.cos(a), radius * np.sin(p) * np.sin(a), radius * np.cos(p))
            for p in phis
            for a in ang
        ]
        return np.vstack([pts, [[0.0, 0.0, -radius]]])

    outer, inner = cap(1.0), cap(0.88)
    n = len(outer)
    v = np.vstack([outer, inner])
    faces = []
    for off in (0, n):
        faces += _grid_faces(rings, segments, offset=off)
        pole = off + n - 1
        last = off + (rings - 1) * segments
        for c in range(segments):
            faces.append((last + c, last + (c + 1) % segments, pole))
    for c in range(segments):  # rim band between the two rims
        a, b = c, (c + 1) % segments
        faces += [(a, b, n + b), (a, n + b, n + a)]
    return _normalise(v, faces)


BUILTIN = {
    "cube": cube,
    "sphere": icosphere,
    "banana": banana,
    "mug": mug,
    "bowl": bowl,
}


def builtin(name: str) -> TriMesh:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown builtin shape {name!r}; choose from {sorted(BUILTIN)}") from None
