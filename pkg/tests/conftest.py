import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_matmul(a, b):
    n, k = len(a), len(b)
    m = len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def centered_covariance(f):
    """Loop oracle: center each column by its mean, then (1/(N-1)) X_c^T X_c."""
    f = np.asarray(f, dtype=float)
    n, d = f.shape
    means = [sum(f[i, j] for i in range(n)) / n for j in range(d)]
    c = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            c[a, b] = sum((f[i, a] - means[a]) * (f[i, b] - means[b]) for i in range(n)) / (n - 1)
    return c


def brute_coral(f_s, f_t):
    d = np.asarray(f_s).shape[1]
    diff = centered_covariance(f_s) - centered_covariance(f_t)
    return sum(diff[i, j] ** 2 for i in range(d) for j in range(d)) / (4 * d * d)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
