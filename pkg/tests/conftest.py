import numpy as np
import pytest

from netdisturb.graph import Network, gnp, row_normalized_weights, weight_matrix
from netdisturb.model import DisturbanceModel


def random_weights(n, rng, density=0.5):
    """Random nonnegative zero-diagonal (non-symmetric) weights."""
    w = rng.random((n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(w, 0.0)
    return weight_matrix(w)


def random_model(n, m, rng, p=0.3, intercept=True):
    g = gnp(n, p, rng)
    w = row_normalized_weights(g)
    cols = [np.ones(n)] if intercept and m else []
    cols += list(rng.standard_normal((m - len(cols), n)))
    x = np.column_stack(cols) if cols else np.zeros((n, 0))
    return DisturbanceModel(x, w)


def path_graph(n):
    return Network.from_edges(n, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {crit}: {detail}")
