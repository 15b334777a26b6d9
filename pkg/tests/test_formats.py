import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvpose import formats
from mvpose.errors import EmptyMaskError
from mvpose.geometry import Pose, random_rotation, save_obj
from mvpose.metrics import GraspRect


@pytest.fixture
def scene_dir(tmp_path, cube_scene):
    gt, mesh, views = cube_scene
    save_obj(mesh, tmp_path / "mesh.obj")
    formats.write_scene(tmp_path, "mesh.obj", views, [f"m{i}.pgm" for i in range(len(views))])
    return tmp_path


def edit_manifest(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


class TestJson:
    @pytest.mark.parametrize("x,s", [(1.0, "1.0"), (0.1, "0.10000000000000001"), (-2.5e-300, "-2.5e-300"), (1e22, "1e+22")])
    def test_format_float(self, x, s):
        assert formats.format_float(x) == s
        assert float(s) == x

    def test_non_finite(self):
        with pytest.raises(ValueError):
            formats.format_float(math.nan)

    def test_dumps(self):
        text = formats.dumps({"a": [1, 2.0], "b": {"c": True, "d": None}, "e": [[1.0, 0.0]], "f": "x"})
        assert json.loads(text) == {"a": [1, 2.0], "b": {"c": True, "d": None}, "e": [[1.0, 0.0]], "f": "x"}
        assert '"a": [1, 2.0]' in text

    def test_read_missing(self, tmp_path):
        with pytest.raises(formats.InputError, match="nope.json: file not found"):
            formats.read_json(tmp_path / "nope.json")

    def test_read_malformed_reports_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "s": [1, 2,\n}')
        with pytest.raises(formats.InputError, match="line 3 column 1"):
            formats.read_json(p)


class TestPose:
    @given(st.integers(0, 2**32 - 1))
    def test_byte_roundtrip(self, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        pose = Pose(rng.uniform(0.1, 10, 3), random_rotation(rng), rng.normal(scale=100, size=3))
        with tempfile.TemporaryDirectory() as d:
            a, b = Path(d) / "a.json", Path(d) / "b.json"
            formats.write_pose(a, pose)
            back = formats.read_pose(a)
            formats.write_pose(b, back)
            assert a.read_bytes() == b.read_bytes()
            assert np.array_equal(back.rotation, pose.rotation)
            assert np.array_equal(back.translation, pose.translation)

    def test_layout(self, tmp_path):
        formats.write_pose(tmp_path / "p.json", Pose())
        doc = json.loads((tmp_path / "p.json").read_text())
        assert doc == {"s": [1.0, 1.0, 1.0], "R": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], "t": [0.0, 0.0, 0.0]}

    @pytest.mark.parametrize(
        "doc,msg",
        [
            ({"R": np.eye(3).tolist(), "t": [0, 0, 0]}, "missing field 's'"),
            ({"s": [1, 1], "R": np.eye(3).tolist(), "t": [0, 0, 0]}, "field 's'"),
            ({"s": [1, 0, 1], "R": np.eye(3).tolist(), "t": [0, 0, 0]}, "must be > 0"),
            ({"s": [1, 1, 1], "R": (2 * np.eye(3)).tolist(), "t": [0, 0, 0]}, "not a rotation"),
            ({"s": [1, 1, 1], "R": np.eye(3).tolist(), "t": ["a", 0, 0]}, "field 't'"),
            ([1, 2, 3], "expected an object"),
        ],
    )
    def test_invalid(self, tmp_path, doc, msg):
        p = tmp_path / "p.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(formats.InputError, match=msg):
            formats.read_pose(p)


class TestPgm:
    def test_roundtrip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(7, 11)).astype(np.uint8)
        formats.write_pgm(tmp_path / "a.pgm", img)
        assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n11 7\n255\n")
        assert np.array_equal(formats.read_pgm(tmp_path / "a.pgm"), img)

    def test_header_comments(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 2 # size\n255\n" + bytes(range(6)))
        assert formats.read_pgm(tmp_path / "c.pgm").tolist() == [[0, 1, 2], [3, 4, 5]]

    @pytest.mark.parametrize(
        "data,msg",
        [(b"P2\n1 1\n255\n0", "P5"), (b"P5\n2 2\n255\n\x00", "truncated"), (b"P5\nx 2\n255\n", "malformed"), (b"P5\n2", "truncated")],
    )
    def test_bad_files(self, tmp_path, data, msg):
        (tmp_path / "b.pgm").write_bytes(data)
        with pytest.raises(formats.InputError, match=msg):
            formats.read_pgm(tmp_path / "b.pgm")

    def test_write_checks(self, tmp_path):
        with pytest.raises(ValueError):
            formats.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2)))
        with pytest.raises(ValueError):
            formats.write_pgm(tmp_path / "x.pgm", np.zeros(4, dtype=np.uint8))

    def test_conversions(self):
        m = np.array([[True, False]])
        assert formats.mask_to_pgm(m).tolist() == [[255, 0]]
        assert formats.soft_to_pgm(np.array([[0.0, 0.5, 1.0, 1.2]])).tolist() == [[0, 128, 255, 255]]
        assert formats.pgm_to_mask(np.array([[127, 128]], dtype=np.uint8)).tolist() == [[False, True]]


class TestScene:
    def test_roundtrip(self, scene_dir, cube_scene):
        _, mesh, views = cube_scene
        mesh2, views2 = formats.load_scene(scene_dir / "scene.json")
        assert np.array_equal(mesh2.faces, mesh.faces)
        assert np.allclose(mesh2.vertices, mesh.vertices, rtol=0, atol=1e-15)
        for a, b in zip(views, views2):
            assert np.array_equal(a.target, b.target)
            assert a.intrinsics == b.intrinsics
            assert np.array_equal(a.extrinsics.rotation, b.extrinsics.rotation)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(formats.InputError, match="scene.json: file not found"):
            formats.load_scene(tmp_path / "scene.json")

    def test_missing_mask(self, scene_dir):
        (scene_dir / "m1.pgm").unlink()
        with pytest.raises(formats.InputError, match="m1.pgm: file not found"):
            formats.load_scene(scene_dir / "scene.json")

    def test_missing_mesh(self, scene_dir):
        (scene_dir / "mesh.obj").unlink()
        with pytest.raises(formats.InputError, match="mesh.obj: file not found"):
            formats.load_scene(scene_dir / "scene.json")

    def test_invalid_rotation(self, scene_dir):
        def bad(doc):
            doc["views"][1]["extrinsics"]["R"][0][0] = 3.0

        edit_manifest(scene_dir / "scene.json", bad)
        with pytest.raises(formats.InputError, match=r"views\[1\].extrinsics.R: not a rotation"):
            formats.load_scene(scene_dir / "scene.json")

    def test_size_mismatch(self, scene_dir):
        edit_manifest(scene_dir / "scene.json", lambda d: d["views"][0]["intrinsics"].update(width=40, cx=20.0))
        with pytest.raises(formats.InputError, match="intrinsics say 40x48"):
            formats.load_scene(scene_dir / "scene.json")

    def test_bad_intrinsics(self, scene_dir):
        edit_manifest(scene_dir / "scene.json", lambda d: d["views"][0]["intrinsics"].update(fx=-1))
        with pytest.raises(formats.InputError, match=r"views\[0\].intrinsics"):
            formats.load_scene(scene_dir / "scene.json")

    def test_missing_field(self, scene_dir):
        edit_manifest(scene_dir / "scene.json", lambda d: d["views"][0].pop("extrinsics"))
        with pytest.raises(formats.InputError, match="missing field 'extrinsics'"):
            formats.load_scene(scene_dir / "scene.json")

    def test_no_views(self, scene_dir):
        edit_manifest(scene_dir / "scene.json", lambda d: d.update(views=[]))
        with pytest.raises(formats.InputError, match="nonempty list"):
            formats.load_scene(scene_dir / "scene.json")

    def test_empty_mask(self, scene_dir):
        formats.write_pgm(scene_dir / "m0.pgm", np.zeros((48, 48), dtype=np.uint8))
        with pytest.raises(EmptyMaskError, match="not visible"):
            formats.load_scene(scene_dir / "scene.json")

    def test_absolute_mask_path(self, scene_dir, tmp_path_factory):
        other = tmp_path_factory.mktemp("elsewhere") / "mask.pgm"
        (scene_dir / "m0.pgm").rename(other)
        edit_manifest(scene_dir / "scene.json", lambda d: d["views"][0].update(mask=str(other)))
        assert len(formats.load_scene(scene_dir / "scene.json")[1]) == 2


class TestGrasps:
    def test_roundtrip(self, tmp_path):
        gs = [GraspRect((1.5, 2.0), 10.0, 5.0, 0.3), GraspRect((0, 0), 1.0, 2.0, 3.0)]
        formats.write_grasps(tmp_path / "g.json", gs)
        back = formats.read_grasps(tmp_path / "g.json")
        for a, b in zip(gs, back):
            assert a.center == b.center and a.width == b.width and a.height == b.height
            assert a.angle == pytest.approx(b.angle, abs=1e-15)

    @pytest.mark.parametrize(
        "doc,msg",
        [
            ({"center": [0, 0]}, "not a JSON list|expected a JSON list"),
            ([{"center": [0, 0], "width": 1, "height": 1}], "entry 0: missing field 'angle_deg'"),
            ([{"center": [0], "width": 1, "height": 1, "angle_deg": 0}], "entry 0: field 'center'"),
            ([{"center": [0, 0], "width": 1, "height": 1, "angle_deg": 0}, {"center": [0, 0], "width": "a", "height": 1, "angle_deg": 0}], "entry 1: field 'width'"),
            ([{"center": [0, 0], "width": 0, "height": 1, "angle_deg": 0}], "must be > 0"),
        ],
    )
    def test_diagnostics(self, tmp_path, doc, msg):
        p = tmp_path / "g.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(formats.InputError, match=msg):
            formats.read_grasps(p)
