import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvpose import harness

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cube_scene():
    """Small two-view cube scene: (gt, mesh, views)."""
    return harness.make_synthetic_scene(harness.SceneSpec(seed=3, n_views=2, image_size=48))


@pytest.fixture(scope="session")
def mug_scene():
    return harness.make_synthetic_scene(harness.SceneSpec(seed=5, n_views=3, image_size=64, mesh_source="mug"))


def lumpy_mesh():
    """Star-shaped icosphere with no rotational or mirror symmetry."""
    from mvpose.geometry import TriMesh
    from mvpose.shapes import icosphere

    base = icosphere(1)
    x, y, z = base.vertices.T
    r = 1 + 0.3 * x + 0.15 * y * y + 0.2 * x * y + 0.12 * z + 0.1 * x * z * z
    return TriMesh(base.vertices * r[:, None], base.faces)


@pytest.fixture(scope="session")
def lumpy_obj(tmp_path_factory):
    from mvpose.geometry import save_obj

    path = tmp_path_factory.mktemp("meshes") / "lumpy.obj"
    save_obj(lumpy_mesh(), path)
    return str(path)


# -- acceptance summary ----------------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """``record(criterion, passed, detail, part=None)``; one line per criterion is printed at the end."""

    def record(criterion, passed, detail, part=None):
        line = f"criterion {criterion}{f' [{part}]' if part else ''}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.setdefault(criterion, []).append((bool(passed), part, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[criterion]
        ok = all(p for p, _, _ in parts)
        detail = "; ".join(f"{part}: {d}" if part else d for _, part, d in parts)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
