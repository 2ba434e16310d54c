import sys
from pathlib import Path

import numpy as np
import pytest

from tlgrid import GenSpec, RectArray, generate, get_backend, set_backend
from tlgrid._backend import HAVE_NUMBA

sys.path.insert(0, str(Path(__file__).parent))

BACKENDS = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    old = get_backend()
    set_backend(request.param)
    yield request.param
    set_backend(old)


def random_rects(n, seed, max_side=0.2, start_id=0):
    """Uniform rects with sides up to ``max_side``, clipped to the unit square."""
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    y = rng.random(n)
    w = rng.random(n) * max_side
    h = rng.random(n) * max_side
    return RectArray(np.arange(start_id, start_id + n, dtype=np.uint64),
                     x, np.minimum(x + w, 1.0), y, np.minimum(y + h, 1.0))


@pytest.fixture
def small_data():
    return random_rects(2000, seed=11, max_side=0.05)


@pytest.fixture
def gen_data():
    return generate(GenSpec(5000, 1e-4, seed=3))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
