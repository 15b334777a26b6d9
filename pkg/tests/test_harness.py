import csv
import io
import math

import numpy as np
import pytest

from mvpose import harness
from mvpose.errors import ConfigError
from mvpose.geometry import geodesic_angle
from mvpose.losses import hausdorff_distance
from mvpose.metrics import mask_iou
from mvpose.refine import RefineConfig
from mvpose.render import render_hard_mask
from mvpose.shapes import BUILTIN

FAST = RefineConfig(max_iters=40)


def scenes_equal(a, b):
    (ga, ma, va), (gb, mb, vb) = a, b
    same_pose = all(np.array_equal(x, y) for x, y in zip(
        (ga.scale, ga.rotation, ga.translation), (gb.scale, gb.rotation, gb.translation)))
    same_mesh = np.array_equal(ma.vertices, mb.vertices) and np.array_equal(ma.faces, mb.faces)
    same_views = all(
        np.array_equal(x.target, y.target)
        and np.array_equal(x.extrinsics.rotation, y.extrinsics.rotation)
        and np.array_equal(x.extrinsics.translation, y.extrinsics.translation)
        and x.intrinsics == y.intrinsics
        for x, y in zip(va, vb)
    )
    return same_pose and same_mesh and same_views and len(va) == len(vb)


class TestScenes:
    @pytest.mark.parametrize("shape", sorted(BUILTIN))
    def test_deterministic(self, shape):
        spec = harness.SceneSpec(seed=9, n_views=3, image_size=48, mesh_source=shape)
        assert scenes_equal(harness.make_synthetic_scene(spec), harness.make_synthetic_scene(spec))

    def test_seed_changes_scene(self):
        a = harness.make_synthetic_scene(harness.SceneSpec(seed=1, image_size=32))
        b = harness.make_synthetic_scene(harness.SceneSpec(seed=2, image_size=32))
        assert not scenes_equal(a, b)

    @pytest.mark.parametrize("n_views,baseline", [(3, 45.0), (5, 45.0), (6, 60.0)])
    def test_baseline(self, n_views, baseline):
        for seed in range(10):
            _, _, views = harness.make_synthetic_scene(
                harness.SceneSpec(seed=seed, n_views=n_views, image_size=16, baseline_min_deg=baseline)
            )
            centers = [v.extrinsics.center for v in views]
            for i in range(n_views):
                assert np.linalg.norm(centers[i]) == pytest.approx(5.0)
                for j in range(i):
                    cos = np.dot(centers[i], centers[j]) / 25.0
                    assert math.degrees(math.acos(min(1.0, cos))) >= baseline - 1e-9

    def test_cameras_look_at_origin(self):
        _, _, views = harness.make_synthetic_scene(harness.SceneSpec(seed=0, image_size=16))
        for v in views:
            q = v.extrinsics.rotation @ np.zeros(3) + v.extrinsics.translation
            assert np.allclose(q[:2], 0, atol=1e-12) and q[2] == pytest.approx(5.0)

    def test_infeasible_baseline(self):
        with pytest.raises(ConfigError):
            harness.make_synthetic_scene(harness.SceneSpec(n_views=6, baseline_min_deg=120.0))

    @pytest.mark.parametrize("kw", [dict(n_views=0), dict(baseline_min_deg=180.0), dict(image_size=0), dict(camera_distance=-1.0)])
    def test_invalid_spec(self, kw):
        with pytest.raises(ConfigError):
            harness.SceneSpec(**kw)

    def test_ground_truth_ranges(self):
        for seed in range(50):
            gt, _, _ = harness.make_synthetic_scene(harness.SceneSpec(seed=seed, n_views=1, image_size=8))
            assert np.all(np.abs(gt.translation) <= 0.5)
            assert np.all((gt.scale >= 0.8) & (gt.scale <= 1.25))

    def test_occupancy(self):
        shapes = sorted(BUILTIN)
        for seed in range(100):
            spec = harness.SceneSpec(seed=seed, n_views=3, mesh_source=shapes[seed % len(shapes)])
            _, _, views = harness.make_synthetic_scene(spec)
            for v in views:
                frac = v.target.mean()
                assert 0.02 <= frac <= 0.60, (seed, frac)

    def test_targets_reproduced(self, mug_scene):
        gt, mesh, views = mug_scene
        for v in views:
            again = render_hard_mask(mesh, gt, v)
            assert mask_iou(again, v.target) == 1.0
            assert hausdorff_distance(again, v.target) == 0.0

    def test_mesh_from_obj(self, lumpy_obj):
        gt, mesh, views = harness.make_synthetic_scene(harness.SceneSpec(seed=0, n_views=1, image_size=16, mesh_source=lumpy_obj))
        assert len(mesh.faces) == 80

    def test_retarget(self, mug_scene):
        gt, mesh, views = mug_scene
        assert all(np.array_equal(a.target, b.target) for a, b in zip(harness.retarget(mesh, gt, views), views))


class TestPerturb:
    def test_zero(self, mug_scene):
        gt = mug_scene[0]
        out = harness.perturb_pose(gt, 0.0, 0.0, 0.0, seed=3)
        assert np.array_equal(out.scale, gt.scale)
        assert np.array_equal(out.rotation, gt.rotation)
        assert np.array_equal(out.translation, gt.translation)

    def test_exact_magnitudes(self, mug_scene):
        gt = mug_scene[0]
        for seed in range(20):
            out = harness.perturb_pose(gt, 10.0, 0.05, 0.1, seed=seed)
            assert math.degrees(geodesic_angle(gt.rotation, out.rotation)) == pytest.approx(10.0, abs=1e-9)
            assert np.linalg.norm(out.translation - gt.translation) == pytest.approx(0.05 * np.linalg.norm(gt.translation), abs=1e-12)
            assert np.all(np.abs(np.log(out.scale / gt.scale)) <= 0.1 + 1e-12)

    def test_reference_length(self, mug_scene):
        gt = mug_scene[0]
        out = harness.perturb_pose(gt, 0.0, 0.05, 0.0, seed=1, ref_length=5.0)
        assert np.linalg.norm(out.translation - gt.translation) == pytest.approx(0.25, abs=1e-12)

    def test_deterministic(self, mug_scene):
        gt = mug_scene[0]
        a = harness.perturb_pose(gt, 10.0, 0.05, 0.1, seed=4)
        b = harness.perturb_pose(gt, 10.0, 0.05, 0.1, seed=4)
        assert np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)

    def test_directions_uniform(self, mug_scene):
        gt = mug_scene[0]
        axes, offsets = [], []
        for seed in range(100):
            out = harness.perturb_pose(gt, 10.0, 0.05, 0.0, seed=seed)
            r = gt.rotation.T @ out.rotation
            axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
            axes.append(axis / np.linalg.norm(axis))
            d = out.translation - gt.translation
            offsets.append(d / np.linalg.norm(d))
        assert np.linalg.norm(np.mean(axes, axis=0)) < 0.2
        assert np.linalg.norm(np.mean(offsets, axis=0)) < 0.2

    def test_negative(self, mug_scene):
        with pytest.raises(ValueError):
            harness.perturb_pose(mug_scene[0], -1.0, 0.0, 0.0, seed=0)


class TestStudies:
    spec = harness.SceneSpec(seed=0, n_views=3, image_size=32)

    def test_benchmark_deterministic_and_aggregates(self):
        a = harness.recovery_benchmark(self.spec, 2, cfg=FAST)
        b = harness.recovery_benchmark(self.spec, 2, cfg=FAST)
        strip = lambda recs: [{k: v for k, v in r.items() if k != "wall_time"} for r in recs]
        assert strip(a.records) == strip(b.records)
        for f in harness.BenchmarkResult.FIELDS:
            vals = np.array([r[f] for r in a.records], dtype=float)
            mean, std = a.aggregate[f]
            assert mean == pytest.approx(vals.mean(), abs=1e-12) and std == pytest.approx(vals.std(), abs=1e-12)

    def test_benchmark_levels_and_poses(self):
        levels = (harness.Perturbation(5.0, 0.02, 0.05), harness.Perturbation(10.0, 0.05, 0.1))
        result, scenes = harness.recovery_benchmark(self.spec, 2, levels, cfg=FAST, keep_poses=True)
        assert [r["rot_deg"] for r in result.records] == [5.0, 5.0, 10.0, 10.0]
        assert len(scenes) == 4
        for r in result.records:
            assert r["final_loss"] <= r["init_loss"]
            assert r["init_rot_deg"] == pytest.approx(r["rot_deg"], abs=1e-9)

    def test_zero_perturbation_never_raises_loss(self):
        result = harness.recovery_benchmark(self.spec, 3, (harness.Perturbation(0.0, 0.0, 0.0),), cfg=FAST)
        assert all(r["final_loss"] <= r["init_loss"] for r in result.records)

    @pytest.mark.xfail(
        strict=True,
        reason="a hard-mask target is not the soft-loss optimum; refinement leaves exact GT to lower the loss",
    )
    def test_zero_perturbation_never_raises_errors(self):
        result = harness.recovery_benchmark(self.spec, 3, (harness.Perturbation(0.0, 0.0, 0.0),), cfg=FAST)
        for r in result.records:
            assert r["final_rot_deg"] <= r["init_rot_deg"]
            assert r["final_trans_err"] <= r["init_trans_err"]
            assert r["final_scale_err"] <= r["init_scale_err"]

    def test_benchmark_needs_trials(self):
        with pytest.raises(ConfigError):
            harness.recovery_benchmark(self.spec, 0)

    def test_convergence_rows(self):
        rows = harness.convergence_study(self.spec, frames=(1, 2), trials=2, cfg=RefineConfig(max_iters=10), n_eval=1)
        assert [r[0] for r in rows] == [1, 2]
        assert all(r[1] >= 0 and r[2] >= 0 for r in rows)

    @pytest.mark.parametrize("kw", [dict(trials=1), dict(frames=()), dict(frames=(0, 1))])
    def test_convergence_invalid(self, kw):
        with pytest.raises(ConfigError):
            harness.convergence_study(self.spec, **kw)

    def test_csv(self):
        result = harness.recovery_benchmark(self.spec, 2, cfg=RefineConfig(max_iters=5))
        text = harness.benchmark_csv(result)
        rows = list(csv.reader(io.StringIO(text)))
        assert tuple(rows[0]) == harness.RECORD_COLUMNS
        assert len(rows) == 3
        assert float(rows[1][rows[0].index("final_loss")]) == result.records[0]["final_loss"]
        assert "wall_time" in harness.benchmark_csv(result, timing=True).splitlines()[0]
        assert text.endswith("\n") and "\r" not in text


class TestGrasps:
    def test_synthetic_deterministic(self, mug_scene):
        mesh = mug_scene[1]
        assert harness.synthetic_grasps(mesh, 3) == harness.synthetic_grasps(mesh, 3)
        assert len(harness.synthetic_grasps(mesh, 3, n=5)) == 5

    def test_sanity_with_gt_is_exact(self, mug_scene):
        gt, mesh, views = mug_scene
        assert harness.grasp_sanity(harness.synthetic_grasps(mesh, 0), gt, gt, views) == 100.0

    def test_sanity_detects_wrong_pose(self, mug_scene):
        gt, mesh, views = mug_scene
        far = harness.perturb_pose(gt, 60.0, 0.1, 0.0, seed=0, ref_length=5.0)
        assert harness.grasp_sanity(harness.synthetic_grasps(mesh, 0), gt, far, views) < 100.0

    def test_rects_follow_pose(self, mug_scene):
        gt, mesh, views = mug_scene
        rects = harness.grasp_rects(harness.synthetic_grasps(mesh, 1), gt, views[0])
        assert all(0 <= r.angle < math.pi for r in rects)


def test_rng_streams():
    a = harness.rng_for(5).random(4)
    assert np.array_equal(a, harness.rng_for(5).random(4))
    assert not np.array_equal(a, harness.rng_for(5, 1).random(4))
    assert harness.trial_seed(0, 1) != harness.trial_seed(0, 2)
