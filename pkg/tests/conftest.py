import math

import numpy as np
import pytest

from sitecluster.core import EmbeddingSet, SiteDictionary

R = math.sqrt(2) / 2


@pytest.fixture
def tri_sites():
    """Two axis sites and their bisector."""
    return SiteDictionary([[1.0, 0.0], [0.0, 1.0], [R, R]], ("site0", "site1", "site2"))


@pytest.fixture
def axis_points():
    return EmbeddingSet([[1.0, 0.0], [0.0, 1.0]])


def random_instance(rng, n=None, n_sites=None, d=None, k=None):
    """Small unstructured instance: unit points and unit sites."""
    n = n or int(rng.integers(3, 40))
    n_sites = n_sites or int(rng.integers(2, 10))
    d = d or int(rng.integers(2, 6))
    k = k or int(rng.integers(1, min(n, n_sites) + 1))
    pts = rng.standard_normal((n, d))
    sites = rng.standard_normal((n_sites, d))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    sites /= np.linalg.norm(sites, axis=1, keepdims=True)
    return EmbeddingSet(pts, normalized=True), SiteDictionary(sites, normalized=True), k
