import pathlib

import numpy as np
import pytest

from therminf import EnergyMetric, Network, load_network

REPO = pathlib.Path(__file__).resolve().parents[1]
NETWORKS = REPO / "networks"
RECIPES = REPO / "recipes"


@pytest.fixture
def single_edge() -> Network:
    return load_network(NETWORKS / "single_edge.json")


@pytest.fixture
def bridge() -> Network:
    return load_network(NETWORKS / "bridge.json")


@pytest.fixture
def series_two_edge() -> Network:
    return load_network(NETWORKS / "series_two_edge.json")


@pytest.fixture
def line_constraint() -> Network:
    return load_network(NETWORKS / "line_constraint.json")


def random_network(rng: np.random.Generator, n_edges: int) -> Network:
    """A random grounded network with full-rank incidence, for property tests.

    Every node gets an edge to ground so B always has full column rank.
    """
    n = rng.integers(1, n_edges + 1)
    rows = []
    for k in range(n):
        row = np.zeros(n)
        row[k] = 1.0
        rows.append(row)
    while len(rows) < n_edges:
        row = np.zeros(n)
        a = rng.integers(0, n + 1)
        b = rng.integers(0, n + 1)
        if a < n:
            row[a] += 1.0
        if b < n:
            row[b] -= 1.0
        rows.append(row)
    B = np.array(rows)
    return Network(
        n_free_nodes=int(n),
        incidence=B,
        coeffs=rng.uniform(0.5, 3.0, size=n_edges),
        sources=rng.normal(size=n),
        applied=rng.normal(scale=0.5, size=n_edges),
        noise=rng.uniform(0.5, 2.0, size=n_edges),
    )


def random_metric(rng: np.random.Generator, n_edges: int, ell: float = 1.0) -> EnergyMetric:
    return EnergyMetric(rng.uniform(0.3, 4.0, size=n_edges), ell=ell)
