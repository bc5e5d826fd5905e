import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

coords = st.floats(-100.0, 100.0, allow_nan=False, allow_infinity=False)
points3 = st.tuples(coords, coords, coords).map(np.array)
seeds = st.integers(0, 2**32 - 1)


@st.composite
def rigid_params(draw, span=50.0):
    """(R, t) of a uniformly random proper rigid motion."""
    seed = draw(seeds)
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=rng).as_matrix()
    t = rng.uniform(-span, span, 3)
    return R, t


@st.composite
def point_sets(draw, n_min=3, n_max=20):
    """Random well-conditioned 3-D point sets."""
    n = draw(st.integers(n_min, n_max))
    rng = np.random.default_rng(draw(seeds))
    while True:
        pts = rng.uniform(-10, 10, (n, 3))
        s = np.linalg.svd(pts - pts.mean(0), compute_uv=False)
        if s[1] > 1e-3 * s[0]:
            return pts


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
