import numpy as np
import pytest

from sheaflab.graph import Graph
from sheaflab.sheaf import CellularSheaf


def random_graph(rng, n, p=0.3):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return Graph.from_edges(n, np.argwhere(upper))


def random_general_sheaf(rng, g, d):
    maps = rng.standard_normal((g.m, 2, d, d))
    return CellularSheaf(g, d, maps, "general")


def dense_coboundary(sheaf):
    """Dense delta built entry by entry from the raw maps: row block e, col blocks tail/head."""
    n, d, m = sheaf.n, sheaf.d, sheaf.graph.m
    delta = np.zeros((m * d, n * d))
    for e, (t, h) in enumerate(sheaf.ends):
        delta[e * d:(e + 1) * d, t * d:(t + 1) * d] += sheaf.maps[e, 0]
        delta[e * d:(e + 1) * d, h * d:(h + 1) * d] -= sheaf.maps[e, 1]
    return delta


def edge_sum_energy(sheaf, x):
    """sum_e ||F_t x_t - F_h x_h||^2 straight from the restriction maps."""
    n, d = sheaf.n, sheaf.d
    xs = x.reshape(n, d, -1)
    total = 0.0
    for e, (t, h) in enumerate(sheaf.ends):
        diff = sheaf.maps[e, 0] @ xs[t] - sheaf.maps[e, 1] @ xs[h]
        total += float(np.sum(diff * diff))
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def k2():
    return Graph.from_edges(2, [(0, 1)])


@pytest.fixture
def p3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


def gradcheck(build, arrays, h=1e-5):
    """Max relative error between backward() and central differences.

    ``build`` maps a list of tensors to a scalar tensor. The error is
    ``max|analytic - numeric| / max(max|numeric|, max|analytic|, 1e-6)`` per
    input, maximised over inputs. The floor treats gradients that are zero
    up to rounding as absolute comparisons.
    """
    from sheaflab.nn import autograd as ag

    params = [ag.parameter(np.array(a, dtype=np.float64)) for a in arrays]
    analytic = ag.backward(build(params), params)
    worst = 0.0
    for i, a in enumerate(arrays):
        numeric = np.zeros_like(a, dtype=np.float64)
        for idx in np.ndindex(a.shape):
            vals = []
            for sign in (1.0, -1.0):
                pert = [np.array(b, dtype=np.float64) for b in arrays]
                pert[i][idx] += sign * h
                vals.append(float(build([ag.parameter(p) for p in pert]).data))
            numeric[idx] = (vals[0] - vals[1]) / (2 * h)
        scale = max(np.abs(numeric).max(initial=0), np.abs(analytic[i]).max(initial=0), 1e-6)
        worst = max(worst, float(np.abs(analytic[i] - numeric).max(initial=0)) / scale)
    return worst


@pytest.fixture
def toy_manifest(tmp_path):
    """Small heterophilic dataset written in manifest layout, with random folds."""
    from sheaflab.datasets import synthetic_heterophilic, write_dataset

    g, x, y = synthetic_heterophilic(n=60, c=3, n_features=8, signal=0.7, seed=3)
    return write_dataset(tmp_path / "toy", "toy", g, x, y)


# one "PASS/FAIL criterion N: ..." line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
