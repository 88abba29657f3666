import numpy as np
import pytest

from marlids.synthetic import gaussian_flows


def write_flow_csv(path, ds, label_column="Label"):
    lines = [", ".join(list(ds.feature_names) + [label_column])]
    for row, label in zip(ds.features, ds.labels):
        lines.append(",".join(repr(float(v)) for v in row) + "," + label)
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def toy_flows():
    return gaussian_flows({"Scan": 60, "Flood": 40, "BENIGN": 100}, n_features=4,
                          separation=8.0, seed=5)


@pytest.fixture
def toy_csv(tmp_path, toy_flows):
    return write_flow_csv(tmp_path / "flows.csv", toy_flows)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# -- acceptance reporting -----------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criterion_lines = []


@pytest.fixture
def criterion(request):
    """Callable that records one pass/fail line for the test's criterion marker."""
    mark = request.node.get_closest_marker("criterion")
    number, title = mark.args
    lines = request.config._criterion_lines
    done = []

    def record(ok, detail, status=None):
        status = status or ("PASS" if ok else "FAIL")
        line = f"criterion {number} [{status}] {title}: {detail}"
        lines.append(line)
        done.append(line)
        reporter = request.config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        assert ok or status == "SKIP", line

    yield record
    if not done:
        lines.append(f"criterion {number} [FAIL] {title}: did not complete")


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
