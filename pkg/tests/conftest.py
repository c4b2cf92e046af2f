import numpy as np
import pytest

from incrtl.estimators import Dataset

from .helpers import ACCEPTANCE_LINES, _ckernels, _pykernels, random_design

KERNEL_BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    KERNEL_BACKENDS.append(pytest.param(_ckernels, id="cython"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(params=KERNEL_BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def consistent_pair(rng):
    """Noiseless source/target whose target new column has zero sample mean."""
    theta = np.array([0.5, 1.0, 2.0, -1.0])
    xT = random_design(rng, 8, 4)
    xT[:, 3] -= xT[:, 3].mean()
    xS = random_design(rng, 40, 3)
    source = Dataset(xS, xS @ theta[:3])
    target = Dataset(xT, xT @ theta, 3)
    return source, target, theta
