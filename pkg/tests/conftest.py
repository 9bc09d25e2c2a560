import numpy as np
import pytest

from mbrl import kernels
from mbrl.harness import gen_environment
from mbrl.mdp import TabularMdp


def coin_mdp():
    """s0 flips a fair coin into 0 or the absorbing paying state 1; returns are 0 or 1 equiprobably."""
    P = np.zeros((2, 1, 2))
    P[0, 0] = [0.5, 0.5]
    P[1, 0, 1] = 1.0
    r = np.array([[0.0], [1.0]])
    return TabularMdp(P, r, 2, 0)


def random_mdp(rng, S=4, A=3, H=3, branching=None):
    params = {"S": S, "A": A, "H": H}
    if branching:
        params["branching"] = branching
    return gen_environment("random_stochastic", params, rng)


@pytest.fixture
def coin():
    return coin_mdp()


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)
