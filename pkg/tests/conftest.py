import numpy as np
import pytest

from lyaputils.core.cells import VanillaCell
from lyaputils.utils.ensembles import RngSpec, gen_cells, gen_initial_states, init_gaussian


def make_instance(arch, seed, n=4, n_in=3, layers=1):
    """
    A random cell stack with weights uniform on [-0.5, 0.5], a Gaussian
    state (LSTM cell vectors included) and a Gaussian input.
    """
    rng = RngSpec(seed)
    cells = gen_cells(arch, n, n_in, rng, layers=layers, init='uniform:0.5',
                      input_init='uniform:0.5', bias_init='uniform:0.5')
    state = gen_initial_states(cells, 1.0, 1, rng)[0]
    for k, layer in enumerate(state):
        if layer.c is not None:
            layer.c[:] = init_gaussian(n, None, 1.0, rng.child(3, k))
    x = init_gaussian(n_in, None, 1.0, rng.child(4))
    return cells, state, x


@pytest.fixture
def instance():
    return make_instance


@pytest.fixture
def rng():
    return RngSpec(2024)


@pytest.fixture
def linear_cell():
    """ Returns a factory of identity-nonlinearity cells V = g Q. """
    def factory(n, g, seed=0):
        Q = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))[0]
        return VanillaCell(g * Q, np.eye(n), nonlinearity='identity')
    return factory


ONE_UNIT = """{
  "format_version": "1.0",
  "arch": "vanilla",
  "layers": [
    {
      "n_hidden": 1,
      "n_input": 1,
      "nonlinearity": "identity",
      "matrices": {"V": [[2]], "U": [[1]], "b": [0]}
    }
  ]
}
"""


@pytest.fixture
def one_unit():
    """ Text of a weights file holding one identity unit with recurrent weight 2. """
    return ONE_UNIT
