import numpy as np
import pytest

from calabi import construct
from calabi.dsl import parse_immersion

INV_SQRT2 = 0.7071067811865476

HYPERBOLA_SRC = (
    "immersion h2 { vars: s; components: "
    "(0.7071067811865476*exp(s), 0.7071067811865476*exp(-s)); }"
)
HYPERBOLA_B_SRC = (
    "immersion h2b { vars: r; components: "
    "(0.7071067811865476*exp(r), 0.7071067811865476*exp(-r)); }"
)
QUADRIC_SRC = (
    "immersion quadric { vars: u1, u2; components: "
    "(u1, u2, sqrt(1 + u1*u1 + u2*u2)); }"
)
PARABOLOID_SRC = (
    "immersion paraboloid { vars: u1, u2; components: "
    "(u1, u2, 0.5*(u1*u1 + u2*u2)); }"
)


def make_grid(lo: float, hi: float, count: int, dims: int) -> np.ndarray:
    axis = np.linspace(lo, hi, count)
    mesh = np.meshgrid(*([axis] * dims), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@pytest.fixture(scope="session")
def hyperbola():
    return parse_immersion(HYPERBOLA_SRC)


@pytest.fixture(scope="session")
def hyperbola_b():
    return parse_immersion(HYPERBOLA_B_SRC)


@pytest.fixture(scope="session")
def quadric():
    return parse_immersion(QUADRIC_SRC)


@pytest.fixture(scope="session")
def paraboloid():
    return parse_immersion(PARABOLOID_SRC)


@pytest.fixture(scope="session")
def pair_product(hyperbola, hyperbola_b):
    return construct.calabi_pair(hyperbola, hyperbola_b)


@pytest.fixture(scope="session")
def point_product(hyperbola):
    return construct.calabi_point(hyperbola)


@pytest.fixture(scope="session")
def mixed_product(hyperbola, hyperbola_b):
    inner = construct.calabi_point(hyperbola_b)
    return construct.calabi_pair(hyperbola, inner)
