import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gp_arclength.gp import Observations, fit
from gp_arclength.kernels import CoregionalizedKernel, KernelSpec

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_psd(rng, d, floor=0.05):
    A = rng.normal(size=(d, d))
    return A @ A.T / d + floor * np.eye(d)


def random_model(rng, d=1, n=None, family=None, noise=None):
    """A fitted GP with random hyperparameters and data on [0, 1]."""
    family = family or rng.choice(["se", "m32", "m52", "rq"])
    k = KernelSpec(family, signal_variance=rng.uniform(0.5, 2.0),
                   length_scale=rng.uniform(0.3, 1.0), rq_shape=rng.uniform(0.5, 3.0))
    B = random_psd(rng, d) if d > 1 else np.eye(1)
    n = n or int(rng.integers(2, 7))
    t = np.sort(rng.uniform(0.0, 1.0, n))
    t += np.arange(n) * 1e-3      # keep inputs distinct
    y = rng.normal(size=(n, d))
    noise = rng.uniform(1e-3, 0.1) if noise is None else noise
    return fit(CoregionalizedKernel(k, B), Observations(t, y, noise))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def m32_kernel():
    return CoregionalizedKernel(KernelSpec("m32", 1.0, 1.0), np.eye(3))


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        lines[number] = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(lines[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
