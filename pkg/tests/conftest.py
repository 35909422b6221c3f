import pytest

from helpers import DATA
from policygen.ingest import load_app_graph, load_permission_map


@pytest.fixture
def recorder():
    return load_app_graph((DATA / "recorder.json").read_bytes())


@pytest.fixture
def recorder_pmap():
    return load_permission_map((DATA / "recorder_pmap.tsv").read_bytes())
