import os

# Small-matrix workloads here run fastest with single-threaded BLAS; the
# setting must land before numpy's first import. Override via the usual env
# variables if your machine prefers otherwise.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from auvpilot.dynamics import VehicleParams  # noqa: E402
from auvpilot.perf import tune_allocator  # noqa: E402

tune_allocator()


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


@pytest.fixture(scope="session")
def default_params():
    return VehicleParams.default()
