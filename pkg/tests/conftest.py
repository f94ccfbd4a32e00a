import pathlib

import pytest

from ttstn.config import build_cluster, load_spec
from ttstn.robot import data_config_path

GOLDEN = pathlib.Path(__file__).parent / "golden"


@pytest.fixture
def table1_cluster():
    return build_cluster(load_spec(data_config_path("table1.cfg")))


@pytest.fixture
def robot_cluster():
    return build_cluster(load_spec(data_config_path("robot.cfg")))


@pytest.fixture
def make_cluster(tmp_path):
    """Build a cluster from inline config text."""

    def build(text, name="inline.cfg"):
        path = tmp_path / name
        path.write_text(text)
        return build_cluster(load_spec(path))

    return build
