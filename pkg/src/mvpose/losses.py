"""Silhouette comparison losses and their pose gradients.

The refinement objective for one view is

    lambda1 * L_iou(pred, target) + lambda2 * L_chamfer(pred, target) / diag

where ``L_chamfer`` is the mean target-distance of predicted soft mass (a
smooth one-sided stand-in for the contour Hausdorff distance, which remains
available as a metric) and ``diag`` the image diagonal in pixels.
"""

from __future__ import annotations

import math
import warnings
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import View
from .errors import DegenerateViewError, EmptyMaskError
from .geometry import Pose, TriMesh
from .render import PoseGradient, SoftParams, SoftRaster


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.1

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def soft_iou_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=bool)
    _check_shapes(pred, t)
    inter = float(pred[t].sum())
    union = float(pred.sum()) + float(t.sum()) - inter
    if union == 0:
        return 1.0
    return 1.0 - inter / union


def soft_iou_grad(pred, target):
    """``(loss, dloss/dpred)`` for the soft IoU loss."""
    pred = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=bool)
    tf = t.astype(float)
    inter = float(pred[t].sum())
    union = float(pred.sum()) + float(t.sum()) - inter
    if union == 0:
        return 1.0, np.zeros_like(pred)
    grad = -(tf * union - inter * (1.0 - tf)) / (union * union)
    return 1.0 - inter / union, grad


# -- exact Euclidean distance transform ------------------------------------


def _envelope_1d(f):
    """Squared-distance lower envelope of ``(q - p)^2 + f[p]`` over finite ``f[p]``.

    Felzenszwalb and Huttenlocher's parabola sweep. ``f`` is a list of floats
    (``inf`` marks absent samples); returns a list of the same length.
    """
    n = len(f)
    pts = [p for p in range(n) if f[p] != math.inf]
    if not pts:
        return [math.inf] * n
    v = [pts[0]]
    z = [-math.inf, math.inf]
    for q in pts[1:]:
        fq = f[q] + q * q
        while True:
            # the first parabola's left boundary is -inf, so v never empties
            p = v[-1]
            s = (fq - (f[p] + p * p)) / (2.0 * (q - p))
            if s > z[-2]:
                break
            v.pop()
            z.pop()
        v.append(q)
        z[-1] = s
        z.append(math.inf)
    out = [0.0] * n
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        p = v[j]
        out[q] = (q - p) * (q - p) + f[p]
    return out


def squared_distance_transform(mask) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest foreground pixel."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMaskError("distance transform of an empty mask")
    h, w = m.shape
    # column pass: 1D distance along each column by two sweeps
    col = np.full((h, w), math.inf)
    big = h + w + 1
    run = np.full(w, big, dtype=np.int64)
    for y in range(h):
        run = np.where(m[y], 0, run + 1)
        col[y] = run
    run = np.full(w, big, dtype=np.int64)
    for y in range(h - 1, -1, -1):
        run = np.where(m[y], 0, run + 1)
        col[y] = np.minimum(col[y], run)
    col = np.where(col >= big, math.inf, col * col)
    out = np.empty((h, w))
    for y in range(h):
        out[y] = _envelope_1d(col[y].tolist())
    return out


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance (pixels) to the nearest foreground pixel center."""
    return np.sqrt(squared_distance_transform(mask))


def contour(mask) -> np.ndarray:
    """Foreground pixels with a 4-neighbour in the background or on the border."""
    m = np.asarray(mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between the contours of two masks."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    _check_shapes(a, b)
    if not a.any() or not b.any():
        raise EmptyMaskError("Hausdorff distance needs two nonempty masks")
    ca, cb = contour(a), contour(b)
    to_b = distance_transform(cb)
    to_a = distance_transform(ca)
    return float(max(to_b[ca].max(), to_a[cb].max()))


def chamfer_surrogate(pred, target_df) -> float:
    pred = np.asarray(pred, dtype=float)
    df = np.asarray(target_df, dtype=float)
    _check_shapes(pred, df)
    mass = float(pred.sum())
    if mass <= 0:
        raise EmptyMaskError("chamfer surrogate of an all-zero prediction")
    return float((pred * df).sum()) / mass


def chamfer_grad(pred, target_df):
    pred = np.asarray(pred, dtype=float)
    mass = float(pred.sum())
    if mass <= 0:
        raise EmptyMaskError("chamfer surrogate of an all-zero prediction")
    c = float((pred * target_df).sum()) / mass
    return c, (target_df - c) / mass


def combined_loss(pred, target, w: LossWeights, target_df=None) -> float:
    return combined_loss_grad(pred, target, w, target_df, need_grad=False)[0]


def combined_loss_grad(pred, target, w: LossWeights, target_df=None, need_grad=True):
    """``(loss, dloss/dpred)``; the gradient is ``None`` when not requested.

    A prediction with no mass at all (rendered off-canvas) takes the chamfer
    term at its upper bound 1 with zero gradient, leaving the IoU term to pull
    it back.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=bool)
    _check_shapes(pred, target)
    if not target.any():
        raise EmptyMaskError("target silhouette is empty (object not visible)")
    loss = 0.0
    grad = np.zeros_like(pred) if need_grad else None
    if w.lambda1 > 0:
        l_iou, g_iou = soft_iou_grad(pred, target)
        loss += w.lambda1 * l_iou
        if need_grad:
            grad += w.lambda1 * g_iou
    if w.lambda2 > 0:
        h, wd = pred.shape
        diag = math.hypot(wd, h)
        if target_df is None:
            target_df = distance_transform(target)
        if pred.sum() > 0:
            c, g_c = chamfer_grad(pred, target_df)
            loss += w.lambda2 * c / diag
            if need_grad:
                grad += (w.lambda2 / diag) * g_c
        else:
            loss += w.lambda2
    return loss, grad


# -- multi-view objective ----------------------------------------------------

_df_cache: "weakref.WeakKeyDictionary[View, np.ndarray]" = weakref.WeakKeyDictionary()


def target_distance_field(view: View) -> np.ndarray:
    """Distance transform of a view's target, computed once per View object."""
    df = _df_cache.get(view)
    if df is None:
        if not view.target.any():
            raise EmptyMaskError("target silhouette is empty (object not visible)")
        df = distance_transform(view.target)
        _df_cache[view] = df
    return df


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _view_term(mesh, pose, view, sp, w, need_grad):
    try:
        raster = SoftRaster(mesh, pose, view, sp)
    except DegenerateViewError:
        return None
    df = target_distance_field(view) if w.lambda2 > 0 else None
    loss, g_pred = combined_loss_grad(raster.image, view.target, w, df, need_grad)
    if not need_grad:
        return loss, None
    if not np.any(g_pred):
        return loss, PoseGradient.zeros()
    return loss, raster.backward(g_pred)


def _reduce(terms, n_views):
    valid = [t for t in terms if t is not None]
    if not valid:
        raise DegenerateViewError("every view is degenerate (object behind all cameras)")
    if len(valid) < n_views:
        warnings.warn(
            f"{n_views - len(valid)} of {n_views} views excluded: object behind camera",
            RuntimeWarning,
            stacklevel=3,
        )
    return valid


def multiview_loss(
    mesh: TriMesh, pose: Pose, views, sp: SoftParams = SoftParams(), w: LossWeights = LossWeights(), threads: int = 1
) -> float:
    """Mean combined loss over views; behind-camera views are left out."""
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    terms = _map(lambda v: _view_term(mesh, pose, v, sp, w, False), views, threads)
    valid = _reduce(terms, len(views))
    total = 0.0
    for loss, _ in valid:
        total += loss
    return total / len(valid)


def multiview_loss_gradient(
    mesh: TriMesh, pose: Pose, views, sp: SoftParams = SoftParams(), w: LossWeights = LossWeights(), threads: int = 1
):
    """``(loss, PoseGradient)`` of :func:`multiview_loss`, reduced in view order."""
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    terms = _map(lambda v: _view_term(mesh, pose, v, sp, w, True), views, threads)
    valid = _reduce(terms, len(views))
    total = 0.0
    grad = PoseGradient.zeros()
    for loss, g in valid:
        total += loss
        grad = grad + g
    n = len(valid)
    return total / n, grad * (1.0 / n)
