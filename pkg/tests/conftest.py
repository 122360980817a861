import numpy as np
import pytest

from povmround import AlgebraElement, BlockAlgebra, State


def rng_for(seed):
    return np.random.default_rng(seed)


def random_element(alg, rng, herm=False):
    blocks = []
    for d in alg.dims:
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        if herm:
            g = (g + g.conj().T) / 2
        blocks.append(g)
    return AlgebraElement(alg, blocks)


def random_density(alg, rng, rank=None):
    densities = []
    for d in alg.dims:
        r = rank or d
        g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
        densities.append(g @ g.conj().T)
    total = sum(np.trace(m).real for m in densities)
    return State(alg, [m / total for m in densities])


@pytest.fixture
def m2():
    return BlockAlgebra((2,))


@pytest.fixture
def trace_state_m2(m2):
    return State.normalized_trace(m2)
