import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ogasched.model import BipartiteGraph
from ogasched.reward import RewardModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; returns a callable(number, ok, detail)."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._criterion_lines.append(line)
        print(line)
        return ok
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, n_ports=3, n_instances=2, K=2, density=None, kinds=None):
    """Small random graph plus reward model for unit and property tests."""
    a = rng.uniform(0.2, 2.0, size=(n_ports, K))
    c = rng.uniform(0.5, 3.0, size=(n_instances, K))
    channels = None
    if density is not None:
        keep = rng.random((n_ports, n_instances)) < density
        keep[np.arange(n_ports), rng.integers(0, n_instances, n_ports)] = True
        keep[rng.integers(0, n_ports, n_instances), np.arange(n_instances)] = True
        channels = np.argwhere(keep)
    graph = BipartiteGraph.from_arrays(a, c, channels).check()
    if kinds is None:
        kinds = rng.integers(0, 4, size=(n_instances, K))
    else:
        kinds = np.broadcast_to(kinds, (n_instances, K))
    model = RewardModel(kinds, rng.uniform(1.0, 1.5, size=(n_instances, K)), rng.uniform(0.3, 0.5, size=K))
    return graph, model
