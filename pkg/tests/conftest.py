import shutil
from datetime import date

import pytest

from bss_usage.synthetic import generate_fixture

_acceptance_lines = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _acceptance_lines.append(f"[{status}] AC{marker.args[0]}: {item.name}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def six_city(tmp_path_factory):
    """Synthetic raw data for six cities over two weeks, plus a config."""
    root = tmp_path_factory.mktemp("six_city")
    return generate_fixture(root, start=date(2023, 10, 2), days=14, seed=0)


@pytest.fixture(scope="session")
def six_city_run(six_city, tmp_path_factory):
    from bss_usage.pipeline import load_config, run_pipeline

    out = tmp_path_factory.mktemp("run") / "out"
    manifest = run_pipeline(load_config(six_city), out)
    return out, manifest


@pytest.fixture
def copy_tree(tmp_path):
    def _copy(src):
        dst = tmp_path / src.name
        shutil.copytree(src, dst)
        return dst

    return _copy
