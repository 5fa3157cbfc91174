import sys

import numpy as np
import pytest

from relit.scene_io import SyntheticSceneSpec, generate_synthetic_scene


@pytest.fixture(scope="session")
def sphere_scene():
    spec = SyntheticSceneSpec(kind="analytic-sphere", resolution=128, channels=8, n_features=4)
    return spec, generate_synthetic_scene(spec)


@pytest.fixture(scope="session")
def random_scene():
    return generate_synthetic_scene(
        SyntheticSceneSpec(kind="random-weights", seed=3, resolution=16, channels=8, n_features=5)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit(rng, count):
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
