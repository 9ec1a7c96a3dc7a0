import numpy as np
import pytest

from kpp_lab.model import DomainGrid
from kpp_lab.scenarios import COUNTEREXAMPLE_STATES, counterexample_spec


@pytest.fixture
def spec():
    return counterexample_spec()


@pytest.fixture
def grid16():
    return DomainGrid.line(16)


@pytest.fixture
def listed_states():
    return [np.array(v) for v in COUNTEREXAMPLE_STATES]
