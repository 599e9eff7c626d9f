import numpy as np
import pytest

from planefield.config import EXAMPLES, example_field_path
from planefield.expr import Domain, FieldSpec, load_field

BOX2 = Domain((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))


@pytest.fixture(scope="session")
def fields():
    return {name: load_field(example_field_path(name)) for name in EXAMPLES}


@pytest.fixture(scope="session")
def sphere():
    return FieldSpec("2*x", "2*y", "2*z", BOX2)


@pytest.fixture(scope="session")
def generic():
    """A non-integrable field with all second and third derivatives present."""
    return FieldSpec("sin(y)+x*z", "cos(x)+y^2*z", "2+x*y+exp(z/3)", BOX2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
