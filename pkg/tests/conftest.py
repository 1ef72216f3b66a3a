import json

import pytest

from fixture_scenes import build_fixture
from kpseg.annotations import parse_dataset, save_index


@pytest.fixture(scope="session")
def scenes(tmp_path_factory):
    """Synthetic five-scene dataset: images, score maps, annotation documents."""
    return build_fixture(tmp_path_factory.mktemp("scenes"))


@pytest.fixture(scope="session")
def dataset(scenes):
    seg = json.loads(scenes["segmentation"].read_text())
    kp = json.loads(scenes["keypoints"].read_text())
    return parse_dataset(seg, kp)


@pytest.fixture(scope="session")
def index_path(scenes, dataset):
    path = scenes["root"] / "index.json"
    save_index(dataset, path)
    return path
