import numpy as np
import pytest

from hybridrt import assets
from hybridrt.field import bake_sdf_from_mesh


@pytest.fixture(scope="session")
def slab_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("slab")
    assets.gen_smoke_slab(str(d))
    return d


@pytest.fixture(scope="session")
def two_room_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("two_room")
    assets.gen_two_room(str(d))
    return d


@pytest.fixture(scope="session")
def furnace_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("furnace")
    assets.gen_furnace(str(d))
    return d


@pytest.fixture(scope="session")
def estimation_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("estimation")
    assets.gen_estimation_room(str(d))
    return d


@pytest.fixture(scope="session")
def hdr_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("hdr")
    assets.gen_hdr_bracket(str(d))
    return d


@pytest.fixture(scope="session")
def icosphere_sdf64():
    """Baked 64^3 SDF of the unit icosphere; shared, it is the slow bake."""
    v, f = assets.icosphere(1.0, 2)
    return bake_sdf_from_mesh(v, f, (-1.5, -1.5, -1.5), (1.5, 1.5, 1.5), (64, 64, 64)), v, f


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
