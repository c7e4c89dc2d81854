import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile(
    "numeric", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("numeric")


def complex_matrices(rows, cols, scale=1.0):
    """Bounded complex matrices as a hypothesis strategy."""
    elems = st.floats(-scale, scale, allow_nan=False, allow_infinity=False, width=32)
    return st.tuples(
        hnp.arrays(np.float64, (rows, cols), elements=elems),
        hnp.arrays(np.float64, (rows, cols), elements=elems),
    ).map(lambda p: p[0] + 1j * p[1])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
