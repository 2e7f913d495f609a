import numpy as np
import pytest

from occbench.geometry import PointCloud


def brute_nearest(src, dst):
    """Exhaustive O(n*m) nearest-neighbour distances from each src row to dst."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    out = np.empty(len(src))
    for i, p in enumerate(src):
        out[i] = np.min(np.sqrt(np.sum((dst - p) ** 2, axis=1)))
    return out


def brute_kid(x, y):
    """Unbiased MMD^2 with k(a, b) = (a.b / d + 1)^3 as explicit double sums."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = x.shape[1]

    def k(a, b):
        return (float(np.dot(a, b)) / d + 1.0) ** 3

    m, n = len(x), len(y)
    sxx = sum(k(x[i], x[j]) for i in range(m) for j in range(m) if i != j)
    syy = sum(k(y[i], y[j]) for i in range(n) for j in range(n) if i != j)
    sxy = sum(k(x[i], y[j]) for i in range(m) for j in range(n))
    return sxx / (m * (m - 1)) + syy / (n * (n - 1)) - 2.0 * sxy / (m * n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_cloud(rng, n, scale=1.0):
    return PointCloud(rng.normal(size=(n, 3)) * scale)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            name = nodeid.split("::")[-1][len("test_"):]
            if outcome != "passed" or name not in results:
                results[name] = "PASS" if outcome == "passed" else "FAIL"
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda s: int(s.split("_")[1])):
        terminalreporter.write_line(f"{results[name]}  {name}")
