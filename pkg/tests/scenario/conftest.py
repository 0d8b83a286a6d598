import pytest

from tests.scenario.helpers import write_clip


@pytest.fixture
def clip(tmp_path):
    return write_clip(tmp_path / "clip")


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("MINSEL_THREADS", "1")
