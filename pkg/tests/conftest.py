"""Shared test fixtures for gasketsim tests."""

import numpy as np
import pytest

from gasketsim.graph import build
from gasketsim.types import Half, HeightLaw, MassLaw, RotorLaw


@pytest.fixture
def sg1_plus():
    """SG_1^+: six vertices, nine edges."""
    return build(1, Half.PLUS)


@pytest.fixture
def sg2_plus():
    """SG_2^+: fifteen vertices."""
    return build(2, Half.PLUS)


@pytest.fixture
def sg1():
    """SG_1, both halves glued at the origin."""
    return build(1, Half.BOTH)


@pytest.fixture
def sg2():
    """SG_2, both halves."""
    return build(2, Half.BOTH)


@pytest.fixture
def sg3():
    """SG_3, both halves (contains S_2 with its outer boundary)."""
    return build(3, Half.BOTH)


@pytest.fixture
def rng():
    """Deterministic generator for tests that need randomness."""
    return np.random.default_rng(20240611)


@pytest.fixture
def uniform_rotors():
    return RotorLaw()


@pytest.fixture
def supercritical_law():
    """Heights 2 or 5 with equal chance: mean 3.5."""
    return HeightLaw(support=[(2, 0.5), (5, 0.5)])


@pytest.fixture
def critical_law():
    """Heights 2 or 4 with equal chance: mean 3, sigma_0 = 1."""
    return HeightLaw(support=[(2, 0.5), (4, 0.5)])


@pytest.fixture
def critical_mass_law():
    """Masses 0.5 or 1.5 with equal chance: mean 1."""
    return MassLaw(support=[(0.5, 0.5), (1.5, 0.5)])


def _naive_stabilize(graph, mask, sigma):
    """Reference toppling: repeatedly topple the first unstable vertex once.

    Uses plain Python adjacency from the cyclic neighbour lists; edges to
    vertices outside ``mask`` (or not materialized) go to the sink.
    """
    heights = [int(h) for h in sigma]
    topples = [0] * len(heights)
    inside = [bool(m) for m in mask]
    nbrs = graph.neighbors.tolist()
    sink = 0
    while True:
        unstable = [i for i in range(len(heights)) if inside[i] and heights[i] >= 4]
        if not unstable:
            break
        v = unstable[0]
        heights[v] -= 4
        topples[v] += 1
        for j in nbrs[v]:
            if j >= 0 and inside[j]:
                heights[j] += 1
            else:
                sink += 1
    return heights, topples, sink


@pytest.fixture
def naive_topple():
    """Brute-force single-toppling oracle (see _naive_stabilize)."""
    return _naive_stabilize

