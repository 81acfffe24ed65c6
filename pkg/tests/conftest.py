import numpy as np
import pytest

from spiralfit.pipeline import normalize_points
from spiralfit.synthetic import SceneSpec, generate_scene

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_log():
    def record(name: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def make_scene(seed=0, **kw):
    return generate_scene(SceneSpec(seed=seed, **kw))


def normalized(scene):
    q, tf = normalize_points(scene.points)
    return q, scene.normals, tf


@pytest.fixture(scope="session")
def clean_scene():
    return make_scene(seed=3, noise_sigma=0.0, outlier_enabled=False)


@pytest.fixture(scope="session")
def noisy_scene():
    return make_scene(seed=11)
