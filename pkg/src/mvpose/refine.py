"""Pose estimation: coarse Euler-bin search, recursive fine search, Adam refinement."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .geometry import Pose, TriMesh, euler_to_rotation, so3_exp
from .losses import LossWeights, multiview_loss, multiview_loss_gradient
from .render import SoftParams


@dataclass(frozen=True)
class RefineConfig:
    k: int = 8
    n_best: int = 4
    fine_rounds: int = 3
    fine_subdiv: int = 3
    max_iters: int = 200
    lr_translation: Optional[float] = None  # None: 0.01 * scaled bounding radius
    lr_rotation: float = 0.05
    lr_log_scale: float = 0.01
    rel_tol: float = 1e-6
    patience: int = 30
    isotropic_scale: bool = False
    optimize_scale: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    soft: SoftParams = field(default_factory=SoftParams)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: float = 1.0  # per-iteration multiplicative step decay
    t0: Optional[tuple] = None  # bin-search translation when no coarse pose is given
    s0: Optional[tuple] = None
    threads: int = 1

    def __post_init__(self):
        for name in ("k", "n_best", "fine_rounds", "fine_subdiv", "patience", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.n_best > self.k**3:
            raise ConfigError("n_best cannot exceed k^3")
        rates = [self.lr_rotation, self.lr_log_scale, self.rel_tol]
        if self.lr_translation is not None:
            rates.append(self.lr_translation)
        if any(not r > 0 for r in rates):
            raise ConfigError("learning rates and tolerances must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.weights.lambda1 == 0 and self.weights.lambda2 == 0:
            raise ConfigError("at least one loss weight must be nonzero")
        if self.weights.lambda2 > 0 and self.weights.lambda1 == 0:
            # the one-sided chamfer term alone is minimised by shrinking
            raise ConfigError("lambda2 > 0 requires lambda1 > 0")


@dataclass(frozen=True)
class EulerBin:
    index: tuple
    center: tuple
    half_width: float


@dataclass
class RefineReport:
    loss_trace: list
    renders_used: int
    coarse_losses: list
    final_pose: Pose
    final_loss: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "loss_trace": [float(x) for x in self.loss_trace],
            "renders_used": int(self.renders_used),
            "final_loss": float(self.final_loss),
            "converged": bool(self.converged),
            "coarse_losses": [
                {"index": list(b.index), "center": list(b.center), "loss": float(l)}
                for b, l in self.coarse_losses
            ],
        }


class _Scorer:
    """Counts multi-view loss evaluations of rotations at a fixed t0, s0."""

    def __init__(self, mesh, views, t0, s0, cfg: RefineConfig):
        self.mesh = mesh
        self.views = list(views)
        self.t0 = np.asarray(t0, dtype=float)
        self.s0 = np.asarray(s0, dtype=float)
        self.cfg = cfg
        self.evaluations = 0

    def __call__(self, rotation) -> float:
        self.evaluations += 1
        pose = Pose(self.s0, rotation, self.t0)
        return multiview_loss(
            self.mesh, pose, self.views, self.cfg.soft, self.cfg.weights, self.cfg.threads
        )


def euler_bins(k: int) -> list[EulerBin]:
    """All k^3 bins in lexicographic index order."""
    h = math.pi / k
    centers = [-math.pi + (2 * i + 1) * h for i in range(k)]
    return [
        EulerBin((i, j, l), (centers[i], centers[j], centers[l]), h)
        for i, j, l in itertools.product(range(k), repeat=3)
    ]


def coarse_bin_search(mesh: TriMesh, views, t0, s0, cfg: RefineConfig, _scorer=None):
    """Loss at every bin center, sorted ascending (ties: smaller index first)."""
    scorer = _scorer or _Scorer(mesh, views, t0, s0, cfg)
    scored = [(b, scorer(euler_to_rotation(*b.center))) for b in euler_bins(cfg.k)]
    scored.sort(key=lambda bl: (bl[1], bl[0].index))
    return scored


def fine_bin_refine(mesh: TriMesh, views, bins, t0, s0, cfg: RefineConfig, _scorer=None) -> np.ndarray:
    """Recursive subdivision inside each promoted bin; best rotation found.

    Each round evaluates ``fine_subdiv**3`` sub-bin centers of the current
    cell and recurses into the best one, so a bin costs
    ``fine_rounds * fine_subdiv**3`` evaluations.
    """
    bins = [b[0] if isinstance(b, tuple) else b for b in bins]
    if not bins:
        raise ValueError("need at least one bin to refine")
    scorer = _scorer or _Scorer(mesh, views, t0, s0, cfg)
    m = cfg.fine_subdiv
    best_loss = math.inf
    best_rot = None
    for b in bins:
        center = np.array(b.center, dtype=float)
        half = b.half_width
        for _ in range(cfg.fine_rounds):
            sub = half / m
            offsets = [-half + (2 * i + 1) * sub for i in range(m)]
            round_best = None
            for d in itertools.product(offsets, repeat=3):
                angles = center + np.array(d)
                rot = euler_to_rotation(*angles)
                loss = scorer(rot)
                if round_best is None or loss < round_best[0]:
                    round_best = (loss, angles)
                if loss < best_loss:
                    best_loss, best_rot = loss, rot
            center = round_best[1]
            half = sub
    return best_rot


class _Adam:
    def __init__(self, n, beta1, beta2, eps):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def direction(self, g):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def default_lr_translation(mesh: TriMesh, pose: Pose) -> float:
    return 0.01 * float(np.linalg.norm(mesh.vertices * pose.scale, axis=1).max())


def gradient_refine(mesh: TriMesh, views, pose0: Pose, cfg: RefineConfig):
    """First-order multi-view refinement; returns the best iterate and its report.

    Parameters are translation, a local rotation increment applied as
    ``R <- R @ so3_exp(w)`` and log-scale. ``renders_used`` counts one
    forward+backward per view per evaluated iterate.
    """
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    lr_t = cfg.lr_translation or default_lr_translation(mesh, pose0)
    lr = np.array([lr_t] * 3 + [cfg.lr_rotation] * 3 + [cfg.lr_log_scale] * 3)
    if not cfg.optimize_scale:
        lr[6:] = 0.0
    adam = _Adam(9, cfg.beta1, cfg.beta2, cfg.adam_eps)

    pose = pose0
    log_s = np.log(pose0.scale)
    best_pose, best_loss = pose0, math.inf
    trace = []
    stale = 0
    converged = False
    evaluations = 0
    for it in range(cfg.max_iters + 1):
        need_grad = it < cfg.max_iters
        if need_grad:
            loss, grad = multiview_loss_gradient(mesh, pose, views, cfg.soft, cfg.weights, cfg.threads)
        else:
            loss = multiview_loss(mesh, pose, views, cfg.soft, cfg.weights, cfg.threads)
            grad = None
        evaluations += 1
        if not math.isfinite(loss) or (grad is not None and not grad.is_finite()):
            raise NumericalError(f"non-finite loss or gradient at iteration {it}")
        trace.append(loss)
        if loss < best_loss:
            improved = best_loss - loss > cfg.rel_tol * abs(best_loss) if math.isfinite(best_loss) else True
            best_pose, best_loss = pose, loss
            stale = 0 if improved else stale + 1
        else:
            stale += 1
        if it > 0 and stale >= cfg.patience:
            converged = True
            break
        if not need_grad:
            break

        g_scale = grad.d_scale * pose.scale  # d/d(log s)
        if cfg.isotropic_scale:
            g_scale = np.full(3, g_scale.sum())
        g = np.concatenate([grad.d_translation, grad.d_rotation, g_scale])
        step = lr * (cfg.lr_decay**it) * adam.direction(g)
        log_s = log_s - step[6:]
        pose = Pose(
            scale=np.exp(log_s),
            rotation=pose.rotation @ so3_exp(-step[3:6]),
            translation=pose.translation - step[:3],
        )

    report = RefineReport(
        loss_trace=trace,
        renders_used=evaluations * len(views),
        coarse_losses=[],
        final_pose=best_pose,
        final_loss=best_loss,
        converged=converged,
    )
    return best_pose, report


def estimate_pose(mesh: TriMesh, views, coarse: Optional[Pose] = None, cfg: RefineConfig = RefineConfig()):
    """Refine from ``coarse`` or, without one, search Euler bins at ``cfg.t0`` / ``cfg.s0`` first."""
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    if coarse is not None:
        return gradient_refine(mesh, views, coarse, cfg)
    if cfg.t0 is None or cfg.s0 is None:
        raise ConfigError("estimate_pose needs a coarse pose or both t0 and s0 in the config")
    scorer = _Scorer(mesh, views, cfg.t0, cfg.s0, cfg)
    ranked = coarse_bin_search(mesh, views, cfg.t0, cfg.s0, cfg, _scorer=scorer)
    rot = fine_bin_refine(mesh, views, ranked[: cfg.n_best], cfg.t0, cfg.s0, cfg, _scorer=scorer)
    pose0 = Pose(scorer.s0, rot, scorer.t0)
    pose, report = gradient_refine(mesh, views, pose0, cfg)
    report.renders_used += scorer.evaluations * len(views)
    report.coarse_losses = ranked
    return pose, report


def initial_translation(views) -> np.ndarray:
    """Least-squares intersection of the rays through each target's centroid.

    A starting ``t0`` for the bin search when no coarse pose is available.
    Needs two or more views with non-parallel centroid rays.
    """
    a = np.zeros((3, 3))
    b = np.zeros(3)
    for view in views:
        k = view.intrinsics
        ys, xs = np.nonzero(view.target)
        if len(xs) == 0:
            raise ConfigError("cannot triangulate from an empty target")
        u, v = xs.mean() + 0.5, ys.mean() + 0.5
        ray = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
        d = view.extrinsics.rotation.T @ ray
        d /= np.linalg.norm(d)
        proj = np.eye(3) - np.outer(d, d)
        a += proj
        b += proj @ view.extrinsics.center
    if np.linalg.cond(a) > 1e8:
        raise ConfigError("centroid rays are parallel; supply t0 explicitly")
    return np.linalg.solve(a, b)
