import numpy as np
import pytest

from textailor import meshes
from textailor.geometry import load_mesh


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Session directory of generated OBJ fixtures."""
    root = tmp_path_factory.mktemp("meshes")
    for name in meshes.FIXTURES:
        meshes.write_fixture(name, root / f"{name}.obj",
                             normals_from_position=name in ("icosphere", "icosahedron"))
    meshes.write_obj(root / "icosphere2.obj", *meshes.icosphere(2))
    return root


@pytest.fixture(scope="session")
def icosphere_mesh(fixture_dir):
    return load_mesh(fixture_dir / "icosphere.obj")


@pytest.fixture(scope="session")
def cube_mesh(fixture_dir):
    return load_mesh(fixture_dir / "cube.obj")


@pytest.fixture(scope="session")
def seamed_cube_mesh(fixture_dir):
    """Cube with per-face vertices: flat normals and clean silhouettes."""
    return load_mesh(fixture_dir / "cube_seamed.obj")


@pytest.fixture(scope="session")
def quad_mesh(fixture_dir):
    return load_mesh(fixture_dir / "quad.obj")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
