import numpy as np
import pytest

from swingid.config import config_from_dict
from swingid.dynamics import GeneratorParams, assemble_descriptor
from swingid.netmodel import Laplacian, NetworkTopology, build_laplacian


def random_connected_topology(rng, n_buses, extra_edges=None, n_gen=None):
    """Random spanning tree plus extra chords, positive weights."""
    edges = {}
    order = rng.permutation(n_buses) + 1
    for pos in range(1, n_buses):
        a, b = int(order[pos]), int(order[rng.integers(0, pos)])
        edges[frozenset((a, b))] = float(rng.uniform(0.5, 5.0))
    extra = rng.integers(0, n_buses) if extra_edges is None else extra_edges
    for _ in range(extra):
        a, b = (int(x) for x in rng.choice(n_buses, 2, replace=False) + 1)
        edges.setdefault(frozenset((a, b)), float(rng.uniform(0.5, 5.0)))
    edge_list = [(*sorted(k), w) for k, w in edges.items()]
    n_gen = n_gen or max(1, n_buses // 2)
    gens = sorted(int(g) for g in rng.choice(n_buses, n_gen, replace=False) + 1)
    return NetworkTopology(n_buses, edge_list, gens)


def random_laplacian(rng, n):
    return build_laplacian(random_connected_topology(rng, n))


def random_system(rng, n, sigma=0.01, ts=0.05, droop=()):
    lap = random_laplacian(rng, n)
    m = rng.uniform(0.5, 2.0, n)
    m[[i - 1 for i in droop]] = 0.0
    d = rng.uniform(0.5, 1.5, n)
    return assemble_descriptor(lap, GeneratorParams(m, d), sigma, ts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_node_config():
    data = {
        "schema_version": 1,
        "name": "three",
        "network": {"laplacian": [[2, -1, -1], [-1, 1.5, -0.5], [-1, -0.5, 1.5]]},
        "generators": [{"m": 0.2, "d": 0.05}, {"m": 0.15, "d": 0.08}, {"m": 0.3, "d": 0.06}],
        "sigma": 1e-4,
        "ts": 1 / 60,
        "horizon": 200,
        "seed": 9,
        "initial_state": {"delta": [0.1, -0.05, 0.0], "omega": [0, 0, 0]},
    }
    return config_from_dict(data)


@pytest.fixture
def path3():
    return Laplacian([[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "ACCEPTANCE", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
