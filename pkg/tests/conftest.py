import numpy as np
import pytest

from ddu_dro.compiler import compile_instance, enumerate_vertices
from ddu_dro.generator import generate_tiny, minimal_instance


@pytest.fixture(scope="session")
def minimal_model():
    return compile_instance(minimal_instance())


@pytest.fixture(scope="session")
def tiny_model():
    return compile_instance(generate_tiny(1, hardenable=True, periods=2))


@pytest.fixture(scope="session")
def tiny_vessel_model():
    return compile_instance(
        generate_tiny(2, vessel=True, hardenable=True, periods=4))


@pytest.fixture(scope="session")
def tiny_grid_model():
    return compile_instance(
        generate_tiny(1, hardenable=True, periods=2, plan_grid=True))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="session")
def tiny_vertices(tiny_model):
    return enumerate_vertices(tiny_model)
