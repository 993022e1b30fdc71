import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs over synthetic corpora")
    config.addinivalue_line("markers", "acceptance(name): a pass/fail acceptance criterion")


@pytest.fixture(scope="session")
def small_traces():
    from kehmode.synthgen import default_config, generate_traces
    cfg = default_config(seed=7, traces_per_mode=4, users=2, trace_duration_s=30.0)
    return [t for t, _ in generate_traces(cfg)]


@pytest.fixture(scope="session")
def fast_config():
    from kehmode.config import PipelineConfig
    return PipelineConfig(atoms_per_class=8, sparsity=3, ksvd_iterations=5, n_selected=10)


# --- acceptance verdict lines ---------------------------------------------

_VERDICTS: list[tuple[str, str, str]] = []


@pytest.fixture
def verdict(request):
    """Collects a one-line measurement for the acceptance summary."""
    notes: list[str] = []
    yield notes.append
    name = request.node.get_closest_marker("acceptance").args[0]
    report = getattr(request.node, "_call_report", None)
    status = "PASS" if report is not None and report.passed else "FAIL"
    _VERDICTS.append((status, name, "; ".join(notes)))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    if call.when == "call":
        item._call_report = outcome.get_result()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _VERDICTS:
        terminalreporter.write_line(f"{status}  {name}: {detail}")
