"""Pose and grasp evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import View, project, world_to_camera
from .errors import BehindCameraError
from .geometry import Pose, transform_points

ANGLE_THRESHOLD = math.radians(30.0)
IOU_THRESHOLD = 0.25
# values this close to a threshold count as lying on it, so round-off cannot
# turn an exact 30 degrees or 0.25 IoU into a pass
BOUNDARY_EPS = 1e-9


def _points(points):
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError("empty point set")
    return p


def add(points, gt: Pose, pred: Pose) -> float:
    """Mean distance between index-paired points under the two poses."""
    p = _points(points)
    d = transform_points(gt, p) - transform_points(pred, p)
    return float(np.linalg.norm(d, axis=1).mean())


def add_s(points, gt: Pose, pred: Pose, chunk: int = 1024) -> float:
    """Mean distance from each gt-posed point to its nearest pred-posed point.

    Not symmetric in (gt, pred). Exact O(m^2) search, chunked for memory.
    """
    p = _points(points)
    a = transform_points(gt, p)
    b = transform_points(pred, p)
    nearest = np.empty(len(a))
    for i in range(0, len(a), chunk):
        blk = a[i : i + chunk]
        d2 = ((blk[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        nearest[i : i + chunk] = np.sqrt(d2.min(axis=1))
    return float(nearest.mean())


@dataclass(frozen=True)
class GraspRect:
    """Oriented grasp rectangle in pixels.

    ``width`` runs along ``angle`` (gripper opening), ``height`` across it
    (finger extent). ``angle`` is stored in ``[0, pi)``.
    """

    center: tuple
    width: float
    height: float
    angle: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("grasp rectangle sides must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "angle", float(self.angle) % math.pi)

    def corners(self) -> np.ndarray:
        """Vertices in counter-clockwise order for a y-up frame."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        ax = np.array([c, s]) * (self.width / 2)
        ay = np.array([-s, c]) * (self.height / 2)
        ctr = np.array(self.center)
        return np.array([ctr - ax - ay, ctr + ax - ay, ctr + ax + ay, ctr - ax + ay])


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise in a y-up frame)."""
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by a convex counter-clockwise ``clip``."""
    out = [np.asarray(p, dtype=float) for p in subject]
    clip = np.asarray(clip, dtype=float)
    for i in range(len(clip)):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % len(clip)]
        edge = b - a

        def side(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])

        inp, out = out, []
        for j in range(len(inp)):
            cur, nxt = inp[j], inp[(j + 1) % len(inp)]
            sc, sn = side(cur), side(nxt)
            if sc >= 0:
                out.append(cur)
            if (sc >= 0) != (sn >= 0):
                t = sc / (sc - sn)
                out.append(cur + t * (nxt - cur))
    return np.array(out).reshape(-1, 2)


def rect_iou(a: GraspRect, b: GraspRect) -> float:
    pa, pb = a.corners(), b.corners()
    inter = abs(polygon_area(clip_convex(pa, pb)))
    union = a.width * a.height + b.width * b.height - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def angle_difference(a: float, b: float, symmetric: bool = True) -> float:
    """Absolute angle difference; modulo pi when ``symmetric`` (two-finger gripper)."""
    period = math.pi if symmetric else 2 * math.pi
    d = abs(a - b) % period
    return min(d, period - d)


def grasp_correct(pred: GraspRect, gts, symmetric: bool = True) -> bool:
    """Rectangle metric: some gt within < 30 degrees and IoU > 0.25, both strict.

    With ``symmetric=False`` the stored angles are compared without wrapping
    at pi, so 1 and 179 degrees are 178 degrees apart.
    """
    gts = list(gts)
    if not gts:
        raise ValueError("need at least one ground-truth rectangle")
    for gt in gts:
        close = angle_difference(pred.angle, gt.angle, symmetric) < ANGLE_THRESHOLD - BOUNDARY_EPS
        if close and rect_iou(pred, gt) > IOU_THRESHOLD + BOUNDARY_EPS:
            return True
    return False


def grasp_accuracy(preds, gts) -> float:
    """Percentage of predictions judged correct against any ground truth."""
    preds = list(preds)
    if not preds:
        return 0.0
    hits = sum(grasp_correct(p, gts) for p in preds)
    return 100.0 * hits / len(preds)


def match_detections(scores, iou_matrix):
    """Greedy score-descending assignment of predictions to ground truths.

    Returns ``(score, iou)`` per prediction, iou 0 when nothing is left to match.
    """
    scores = np.asarray(scores, dtype=float)
    iou = np.asarray(iou_matrix, dtype=float).reshape(len(scores), -1)
    used = np.zeros(iou.shape[1], dtype=bool)
    records = [None] * len(scores)
    for i in sorted(range(len(scores)), key=lambda i: (-scores[i], i)):
        cand = np.where(used, -1.0, iou[i])
        j = int(np.argmax(cand)) if cand.size else -1
        if j >= 0 and cand[j] > 0:
            used[j] = True
            records[i] = (float(scores[i]), float(iou[i, j]))
        else:
            records[i] = (float(scores[i]), 0.0)
    return records


def detection_prf(records, gt_counts, threshold: float):
    """Precision, recall and F1 at an IoU threshold.

    ``records[i]`` lists ``(score, matched_iou)`` for the predictions of image
    ``i``. Within an image predictions are taken by descending score and at
    most ``gt_counts[i]`` of them can be true positives.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    tp = n_pred = n_gt = 0
    for recs, count in zip(records, gt_counts):
        n_pred += len(recs)
        n_gt += int(count)
        hits = 0
        for score, iou in sorted(recs, key=lambda r: -r[0]):
            if hits < count and iou > threshold:
                hits += 1
        tp += hits
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def mask_iou(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0


def normalized_reach(hand, obj, base) -> float:
    """Hand-object gap over object-base distance, clamped to [0, 1].

    0 means the hand reached the object; 1 means it never left the base.
    """
    hand, obj, base = (np.asarray(x, dtype=float) for x in (hand, obj, base))
    ref = float(np.linalg.norm(obj - base))
    if ref == 0:
        raise ValueError("object coincides with the robot base")
    return min(1.0, max(0.0, float(np.linalg.norm(hand - obj)) / ref))


def grasp_to_camera(center_obj, angle_obj: float, pose: Pose, view: View, width: float = 20.0, height: float = 10.0) -> GraspRect:
    """Project an object-frame grasp into a view as an image rectangle.

    The grasp axis is the unit vector at ``angle_obj`` in the object's xy
    plane; its image direction is the projected displacement between the
    posed center and the posed center-plus-axis.
    """
    c = np.asarray(center_obj, dtype=float).reshape(3)
    axis = np.array([math.cos(angle_obj), math.sin(angle_obj), 0.0])
    pts = transform_points(pose, np.stack([c, c + axis]))
    cam = world_to_camera(view.extrinsics, pts)
    if np.any(cam[:, 2] <= 1e-9):
        raise BehindCameraError("grasp lies behind the camera")
    uv = project(view.intrinsics, cam)
    d = uv[1] - uv[0]
    return GraspRect(center=tuple(uv[0]), width=width, height=height, angle=math.atan2(d[1], d[0]))
