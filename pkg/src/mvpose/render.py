"""Soft silhouette rasterization with analytic pose gradients.

Per pixel ``j`` and face ``f`` the renderer forms the signed squared
distance ``D`` from the pixel center to the projected 2D triangle
(positive inside) and the occupancy ``p = sigmoid(D / sigma)``. Faces are
combined as ``A = 1 - prod_f (1 - p)``, evaluated in log space as
``A = -expm1(-sum_f softplus(D / sigma))`` so that fully covered pixels keep
a usable ``1 - A``.

Only pixel/face pairs whose centers lie inside the face's bounding box grown
by ``sqrt(CUTOFF * sigma)`` are visited; any skipped pair has
``p < exp(-CUTOFF)`` and contributes below double-precision resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import View, world_to_camera
from .errors import DegenerateViewError
from .geometry import Pose, TriMesh, transform_points

CUTOFF = 50.0


@dataclass(frozen=True)
class SoftParams:
    sigma: float = 1e-2  # px^2
    cull_eps: float = 1e-4  # m

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.cull_eps > 0:
            raise ValueError("cull_eps must be > 0")


@dataclass(frozen=True)
class PoseGradient:
    """Gradient w.r.t. per-axis scale, a right-multiplied so(3) increment and translation."""

    d_scale: np.ndarray
    d_rotation: np.ndarray
    d_translation: np.ndarray

    @classmethod
    def zeros(cls) -> "PoseGradient":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_scale, self.d_rotation, self.d_translation])

    def __add__(self, other: "PoseGradient") -> "PoseGradient":
        return PoseGradient(
            self.d_scale + other.d_scale,
            self.d_rotation + other.d_rotation,
            self.d_translation + other.d_translation,
        )

    def __mul__(self, c: float) -> "PoseGradient":
        return PoseGradient(c * self.d_scale, c * self.d_rotation, c * self.d_translation)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_vector())))


class _Projection:
    """Mesh vertices carried through pose, extrinsics and intrinsics for one view."""

    def __init__(self, mesh: TriMesh, pose: Pose, view: View, cull_eps: float):
        k = view.intrinsics
        self.mesh = mesh
        self.pose = pose
        self.view = view
        self.world = transform_points(pose, mesh.vertices)
        self.cam = world_to_camera(view.extrinsics, self.world)
        z = self.cam[:, 2]
        front = z > cull_eps
        faces = mesh.faces
        keep = front[faces].all(axis=1)
        if not keep.any():
            raise DegenerateViewError("no face survives near-plane culling (object behind camera)")
        zs = np.where(front, z, 1.0)
        self.uv = np.stack(
            [k.cx + k.fx * self.cam[:, 0] / zs, k.cy + k.fy * self.cam[:, 1] / zs], axis=1
        )
        self.faces = faces[keep]

    def pairs(self, margin: float):
        """Enumerate (face position, pixel x, pixel y) inside grown face boxes.

        Pairs are ordered by face index, then row-major within the box.
        """
        k = self.view.intrinsics
        tri = self.uv[self.faces]  # (F, 3, 2)
        lo = np.ceil(tri.min(axis=1) - margin - 0.5)
        hi = np.floor(tri.max(axis=1) + margin - 0.5)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, [k.width - 1, k.height - 1])
        lo = lo.astype(np.int64)
        hi = hi.astype(np.int64)
        n = np.maximum(hi - lo + 1, 0)
        nx, ny = n[:, 0], n[:, 1]
        counts = nx * ny
        total = int(counts.sum())
        fpos = np.repeat(np.arange(len(self.faces)), counts)
        start = np.repeat(np.cumsum(counts) - counts, counts)
        local = np.arange(total, dtype=np.int64) - start
        nxr = nx[fpos]
        ix = lo[fpos, 0] + local % nxr
        iy = lo[fpos, 1] + local // nxr
        return fpos, ix, iy


def _signed_sq_distance(tri, px, py):
    """Signed squared distance from points to triangles, plus backward context.

    ``tri`` is (P, 3, 2). Returns ``(D, inside, edge, t, diff)`` where ``edge``
    is the nearest edge (first on ties), ``t`` the clamped parameter of the
    nearest point on it and ``diff`` the point minus that nearest point.
    """
    p = np.stack([px, py], axis=1)
    d2 = np.empty((len(p), 3))
    ts = np.empty((len(p), 3))
    diffs = np.empty((len(p), 3, 2))
    w = np.empty((len(p), 3))
    for e in range(3):
        a = tri[:, e]
        b = tri[:, (e + 1) % 3]
        ev = b - a
        ap = p - a
        len2 = np.einsum("ij,ij->i", ev, ev)
        num = np.einsum("ij,ij->i", ap, ev)
        safe = np.where(len2 > 0, len2, 1.0)
        t = np.where(len2 > 0, np.clip(num / safe, 0.0, 1.0), 0.0)
        diff = ap - t[:, None] * ev
        d2[:, e] = np.einsum("ij,ij->i", diff, diff)
        ts[:, e] = t
        diffs[:, e] = diff
        w[:, e] = ev[:, 0] * ap[:, 1] - ev[:, 1] * ap[:, 0]
    inside = np.all(w > 0, axis=1) | np.all(w < 0, axis=1)
    edge = np.argmin(d2, axis=1)
    rows = np.arange(len(p))
    dmin = d2[rows, edge]
    D = np.where(inside, dmin, -dmin)
    return D, inside, edge, ts[rows, edge], diffs[rows, edge]


def _edge_lines(tri):
    """Unit inward normals and offsets of each triangle's edge lines.

    ``normal[f, e] . p - offset[f, e]`` is the signed distance of ``p`` to the
    line through edge ``e``, positive on the interior side. Degenerate faces
    get ``solid = False``; zero-length edges get a zero normal and are flagged
    in ``point``.
    """
    a = tri
    b = np.roll(tri, -1, axis=1)
    ev = b - a
    area = ev[:, 0, 0] * ev[:, 1, 1] - ev[:, 0, 1] * ev[:, 1, 0]
    length = np.hypot(ev[..., 0], ev[..., 1])
    sign = np.where(area < 0, -1.0, 1.0)[:, None]
    safe = np.where(length > 0, length, 1.0)
    normal = np.stack([-ev[..., 1], ev[..., 0]], axis=-1) * (sign / safe)[..., None]
    offset = np.einsum("fek,fek->fe", normal, a)
    point = length == 0
    solid = area != 0
    return normal, offset, solid, point


def _line_bound(tri_lines, fpos, px, py):
    """Per pair, a lower bound on the signed distance to the triangle boundary.

    Positive values certify the pixel is at least that deep inside, values
    below ``-r`` certify it is more than ``r`` outside.
    """
    normal, offset, solid, point = tri_lines
    # zero-length edges constrain nothing; only degenerate faces have them
    off = np.where(point, -np.inf, offset)
    coef = np.concatenate([normal[:, :, 0], normal[:, :, 1], off], axis=1)[fpos]
    lo = coef[:, 0] * px + coef[:, 3] * py - coef[:, 6]
    for e in (1, 2):
        np.minimum(lo, coef[:, e] * px + coef[:, 3 + e] * py - coef[:, 6 + e], out=lo)
    flat = np.nonzero(~solid[fpos])[0]
    if len(flat):
        # a degenerate face has no interior; only the unsigned distance is meaningful
        c = coef[flat]
        line = np.abs(c[:, :3] * px[flat, None] + c[:, 3:6] * py[flat, None] - c[:, 6:])
        lo[flat] = np.where(point[fpos[flat]], np.inf, -line).min(axis=1)
    return lo, solid[fpos]


class SoftRaster:
    """Forward soft render of one view, retaining what the backward pass needs."""

    def __init__(self, mesh: TriMesh, pose: Pose, view: View, sp: SoftParams):
        self.sp = sp
        self.proj = _Projection(mesh, pose, view, sp.cull_eps)
        k = view.intrinsics
        self.shape = k.shape
        npix = k.width * k.height
        margin = float(np.sqrt(CUTOFF * sp.sigma))
        fpos, ix, iy = self.proj.pairs(margin)
        px = ix + 0.5
        py = iy + 0.5
        pix = iy * k.width + ix

        # Distances to the three edge lines bound the distance to the triangle
        # from below, which settles most pairs without the exact computation:
        # far outside (p < exp(-CUTOFF)) is dropped; deep inside saturates the
        # pixel, whose A then rounds to exactly 1 and whose gradient vanishes.
        lines = _edge_lines(self.proj.uv[self.proj.faces])
        lo, solid = _line_bound(lines, fpos, px, py)
        deep = (lo > margin) & solid
        saturated = np.zeros(npix, dtype=bool)
        saturated[pix[deep]] = True
        keep = (lo >= -margin) & ~saturated[pix]
        fpos, px, py, pix = fpos[keep], px[keep], py[keep], pix[keep]

        tri = self.proj.uv[self.proj.faces[fpos]]
        D, inside, edge, t, diff = _signed_sq_distance(tri, px, py)
        x = D / sp.sigma
        log_miss = -np.logaddexp(0.0, x)
        s = np.bincount(pix, weights=log_miss, minlength=npix).astype(float)
        s[saturated] = -np.inf
        self.image = (-np.expm1(s)).reshape(self.shape)
        self._miss = np.exp(s)
        self._ctx = (fpos, pix, x, inside, edge, t, diff)

    def backward(self, upstream) -> PoseGradient:
        """Gradient of ``sum_j upstream[j] * A[j]`` with respect to the pose."""
        up = np.asarray(upstream, dtype=float).reshape(-1)
        if up.size != self.image.size:
            raise ValueError("upstream size does not match the image")
        fpos, pix, x, inside, edge, t, diff = self._ctx
        proj = self.proj
        coverage_miss = self._miss
        # dA/dx_f = (1 - A) * sigmoid(x_f)
        sig = np.exp(-np.logaddexp(0.0, -x))
        g = up[pix] * coverage_miss[pix] * sig / self.sp.sigma
        g = np.where(inside, g, -g)  # dL / d(d2)
        g_start = (-2.0 * g * (1.0 - t))[:, None] * diff
        g_end = (-2.0 * g * t)[:, None] * diff
        faces = proj.faces[fpos]
        rows = np.arange(len(fpos))
        v_start = faces[rows, edge]
        v_end = faces[rows, (edge + 1) % 3]
        nv = len(proj.uv)
        g_uv = np.empty((nv, 2))
        for c in range(2):
            g_uv[:, c] = np.bincount(v_start, weights=g_start[:, c], minlength=nv) + np.bincount(
                v_end, weights=g_end[:, c], minlength=nv
            )
        return _chain_to_pose(proj, g_uv)


def _chain_to_pose(proj: _Projection, g_uv) -> PoseGradient:
    k = proj.view.intrinsics
    ext = proj.view.extrinsics
    pose = proj.pose
    cam = proj.cam
    z = np.where(cam[:, 2] > 0, cam[:, 2], 1.0)
    gu, gv = g_uv[:, 0], g_uv[:, 1]
    g_cam = np.stack(
        [gu * k.fx / z, gv * k.fy / z, -(gu * k.fx * cam[:, 0] + gv * k.fy * cam[:, 1]) / (z * z)],
        axis=1,
    )
    g_world = g_cam @ ext.rotation  # R_e^T g per row
    g_model = g_world @ pose.rotation  # R^T g per row, gradient w.r.t. s * x
    y = proj.mesh.vertices * pose.scale
    return PoseGradient(
        d_scale=(g_model * proj.mesh.vertices).sum(axis=0),
        d_rotation=np.cross(y, g_model).sum(axis=0),
        d_translation=g_world.sum(axis=0),
    )


def render_silhouette(mesh: TriMesh, pose: Pose, view: View, sp: SoftParams = SoftParams()) -> np.ndarray:
    """Soft silhouette of shape (H, W) with values in [0, 1]."""
    return SoftRaster(mesh, pose, view, sp).image


def backward_pose(mesh: TriMesh, pose: Pose, view: View, sp: SoftParams, upstream) -> PoseGradient:
    return SoftRaster(mesh, pose, view, sp).backward(upstream)


def _owns_edge(ev):
    # top-left rule: of the two opposite traversals of a shared edge exactly one is owned
    return (ev[:, 1] < 0) | ((ev[:, 1] == 0) & (ev[:, 0] > 0))


def render_hard_mask(mesh: TriMesh, pose: Pose, view: View, cull_eps: float = SoftParams.cull_eps) -> np.ndarray:
    """Binary silhouette: pixel centers inside any surviving projected face."""
    proj = _Projection(mesh, pose, view, cull_eps)
    k = view.intrinsics
    fpos, ix, iy = proj.pairs(0.0)
    tri = proj.uv[proj.faces[fpos]].copy()
    area = (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1]) - (
        tri[:, 1, 1] - tri[:, 0, 1]
    ) * (tri[:, 2, 0] - tri[:, 0, 0])
    flip = area < 0
    tri[flip, 1], tri[flip, 2] = tri[flip, 2].copy(), tri[flip, 1].copy()
    px = ix + 0.5
    py = iy + 0.5
    hit = area != 0
    for e in range(3):
        a = tri[:, e]
        ev = tri[:, (e + 1) % 3] - a
        w = ev[:, 0] * (py - a[:, 1]) - ev[:, 1] * (px - a[:, 0])
        hit &= (w > 0) | ((w == 0) & _owns_edge(ev))
    mask = np.zeros(k.width * k.height, dtype=bool)
    mask[(iy * k.width + ix)[hit]] = True
    return mask.reshape(k.shape)
