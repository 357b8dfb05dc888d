import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from detaildepth import CameraModel, DepthGrid, SurfaceSpec, generate
from detaildepth._backend import backend_name, use_backend

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

PLANE_SLOPES = [(0.0, 0.0), (0.1, 0.0), (0.0, -0.25), (0.3, 0.2), (-0.5, 0.4), (1.0, -1.0)]


@pytest.fixture
def ortho():
    return CameraModel.orthographic(0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel backend, restoring the previous one after."""
    previous = backend_name()
    use_backend(request.param)
    yield request.param
    use_backend(previous)


def plane(slope_x, slope_y, camera, size=(32, 32), depth=2.0):
    kind = "plane" if slope_x == 0 and slope_y == 0 else "ramp"
    spec = SurfaceSpec(kind, width=size[1], height=size[0], depth=depth,
                       slope_x=slope_x, slope_y=slope_y)
    return generate(spec, camera)


def random_masked_grid(seed, shape=(24, 20), p_valid=0.8):
    r = np.random.default_rng(seed)
    values = 2.0 + 0.3 * r.standard_normal(shape)
    mask = r.random(shape) < p_valid
    mask.flat[0] = True
    return DepthGrid(values, mask)


# Lines recorded by test_acceptance.py, echoed once at the end of the run so
# they show up without -s.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
