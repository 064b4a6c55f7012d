import numpy as np
import pytest

from urbanseg.synth import SynthSpec, synthesize
from urbanseg.taxonomy import NO_INSTANCE, AnnotatedPointCloud, BuildingCategory, UrbanClass


def random_cloud(rng: np.random.Generator, n: int) -> AnnotatedPointCloud:
    sem = rng.integers(0, len(UrbanClass), size=n)
    building = sem == UrbanClass.BUILDING
    inst = np.where(building, rng.integers(0, 50, size=n) * 7 + 3, NO_INSTANCE)
    cat = np.where(building, rng.integers(0, len(BuildingCategory), size=n), BuildingCategory.UNLABELED)
    return AnnotatedPointCloud(rng.normal(scale=100.0, size=(n, 3)), rng.integers(0, 256, size=(n, 3)),
                               sem, inst, cat)


@pytest.fixture(scope="session")
def small_scene():
    return synthesize(SynthSpec(n_buildings=12, density=8.0, n_vegetation=6, n_vehicles=4), seed=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
