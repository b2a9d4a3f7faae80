import numpy as np
import pytest

from lyaputils import DimensionException, ConfigException
from lyaputils.core.cells import (LayerState, NetState, VanillaCell, LSTMCell, GRUCell,
                                  make_cell, step, jacobian_state, jacobian_input,
                                  stacked_step, stacked_jacobian, finite_difference_jacobian,
                                  fingerprint)
from lyaputils.utils.oracle import max_scaled_error

ARCH_LIST = ('vanilla', 'lstm', 'gru')


def lstm_zeros(n=1, m=1):
    params = {}
    for g in LSTMCell.gates:
        params['W_' + g] = np.zeros((n, m))
        params['U_' + g] = np.zeros((n, n))
        params['b_' + g] = np.zeros(n)
    return LSTMCell(**params)


def gru_zeros(n=2, m=1):
    params = {}
    for g in GRUCell.gates:
        params['W_' + g] = np.zeros((n, m))
        params['U_' + g] = np.zeros((n, n))
    return GRUCell(**params)


def test_vanilla_identity_map():
    cell = VanillaCell(np.eye(2), np.zeros((2, 3)), nonlinearity='identity')
    nxt = step(cell, LayerState([1., 2.]), [0.3, -1., 7.])
    np.testing.assert_array_equal(nxt.h, [1., 2.])


def test_vanilla_input_only():
    cell = VanillaCell(np.zeros((1, 1)), np.eye(1))
    nxt = step(cell, LayerState([0.]), [0.5])
    np.testing.assert_allclose(nxt.h, [np.tanh(0.5)], rtol=1e-15)
    assert abs(nxt.h[0] - 0.46212) < 1e-5


def test_lstm_zero_weights():
    cell = lstm_zeros()
    nxt = step(cell, LayerState([0.8], [1.0]), [0.3])
    np.testing.assert_allclose(nxt.c, [0.5], rtol=1e-15)
    np.testing.assert_allclose(nxt.h, [0.5 * np.tanh(0.5)], rtol=1e-15)
    assert abs(nxt.h[0] - 0.23106) < 1e-5


def test_gru_zero_weights():
    cell = gru_zeros()
    state = LayerState([0.4, -2.])
    nxt, J, Jx = cell.linearize(state, [1.], wrt_input=True)
    np.testing.assert_allclose(nxt.h, [0.2, -1.], rtol=1e-15)
    np.testing.assert_allclose(J, 0.5 * np.eye(2), rtol=1e-15)
    np.testing.assert_array_equal(Jx, np.zeros((2, 1)))


def test_lstm_needs_cell_vector():
    with pytest.raises(DimensionException):
        step(lstm_zeros(), LayerState([0.8]), [0.])


def test_jacobian_at_zero_preactivation():
    rng = np.random.default_rng(1)
    V, U = rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 2))
    cell = VanillaCell(V, U)
    np.testing.assert_array_equal(jacobian_state(cell, LayerState(np.zeros(3)), np.zeros(2)), V)
    np.testing.assert_array_equal(jacobian_input(cell, LayerState(np.zeros(3)), np.zeros(2)), U)


def test_saturation_kills_jacobian():
    cell = VanillaCell([[2.]], [[1.]])
    J = jacobian_state(cell, LayerState([5.]), [0.])
    np.testing.assert_allclose(J, [[2. / np.cosh(10.)**2]], rtol=1e-6)
    assert abs(J[0, 0] - 1.65e-8) < 0.01e-8


def test_identity_input_jacobian():
    cell = VanillaCell(np.eye(3), 3 * np.eye(3), nonlinearity='identity')
    np.testing.assert_array_equal(jacobian_input(cell, LayerState(np.ones(3)), np.ones(3)), 3 * np.eye(3))


@pytest.mark.parametrize('arch', ARCH_LIST)
@pytest.mark.parametrize('seed', range(20))
def test_jacobians_match_finite_differences(instance, arch, seed):
    cells, state, x = instance(arch, seed)
    cell, layer = cells[0], state[0]
    assert max_scaled_error(jacobian_state(cell, layer, x),
                              finite_difference_jacobian(cells, state, x, eps=1e-5)) < 1e-5
    assert max_scaled_error(jacobian_input(cell, layer, x),
                              finite_difference_jacobian(cells, state, x, eps=1e-5, wrt='input')) < 1e-5


@pytest.mark.parametrize('arch', ARCH_LIST)
@pytest.mark.parametrize('layers', (2, 3))
def test_stacked_jacobian_matches_finite_differences(instance, arch, layers):
    cells, state, x = instance(arch, 7, n=3, n_in=2, layers=layers)
    J = stacked_jacobian(cells, state, x)
    assert J.shape == (3 * layers, 3 * layers)
    assert max_scaled_error(J, finite_difference_jacobian(cells, state, x)) < 1e-5
    # layer k does not depend on the previous state of layers above it
    for k in range(layers - 1):
        np.testing.assert_array_equal(J[3 * k:3 * k + 3, 3 * k + 3:], 0.)


def test_single_layer_stack_is_jacobian_state(instance):
    cells, state, x = instance('gru', 3)
    np.testing.assert_array_equal(stacked_jacobian(cells, state, x), jacobian_state(cells[0], state[0], x))


def test_identity_composition_blocks():
    I = np.eye(2)
    cells = [VanillaCell(I, np.ones((2, 1)), nonlinearity='identity'),
             VanillaCell(I, I, nonlinearity='identity')]
    state = NetState([np.zeros(2), np.zeros(2)])
    J = stacked_jacobian(cells, state, [1.])
    np.testing.assert_array_equal(J, np.block([[I, 0 * I], [I, I]]))


def test_stacked_step_feeds_hidden_state_upwards():
    cells = [VanillaCell(np.zeros((2, 2)), np.ones((2, 1)), nonlinearity='identity'),
             VanillaCell(np.zeros((1, 1)), np.ones((1, 2)), nonlinearity='identity')]
    nxt = stacked_step(cells, NetState([np.zeros(2), np.zeros(1)]), [2.])
    np.testing.assert_array_equal(nxt.h, [2., 2., 4.])


def test_finite_differences_of_linear_map():
    V = np.random.default_rng(5).standard_normal((4, 4))
    cell = VanillaCell(V, np.eye(4), nonlinearity='identity')
    J = finite_difference_jacobian(cell, LayerState(np.ones(4)), np.zeros(4))
    np.testing.assert_allclose(J, V, atol=1e-9)


def test_finite_differences_of_tanh_at_zero():
    cell = VanillaCell([[1.]], [[1.]])
    J = finite_difference_jacobian(cell, LayerState([0.]), [0.], eps=1e-5)
    assert abs(J[0, 0] - 1.) < 1e-9


def test_shape_mismatch_names_matrix():
    with pytest.raises(DimensionException, match='matrix U '):
        VanillaCell(np.eye(3), np.ones((4, 2)))
    params = {name: np.zeros((2, 2)) for name in LSTMCell.param_names if not name.startswith('b')}
    params['U_o'] = np.zeros((2, 3))
    with pytest.raises(DimensionException, match='U_o'):
        LSTMCell(**params)
    del params['U_o']
    with pytest.raises(DimensionException, match='missing matrix U_o'):
        LSTMCell(**params)


def test_input_length_checked():
    cell = VanillaCell(np.eye(3), np.ones((3, 2)))
    with pytest.raises(DimensionException, match='n_input=2'):
        step(cell, LayerState(np.zeros(3)), np.zeros(3))
    with pytest.raises(DimensionException):
        step(cell, LayerState(np.zeros(4)), np.zeros(2))


def test_stack_dimensions_checked():
    cells = [VanillaCell(np.eye(3), np.ones((3, 2))), VanillaCell(np.eye(2), np.ones((2, 2)))]
    with pytest.raises(DimensionException, match='layer 2'):
        stacked_step(cells, NetState([np.zeros(3), np.zeros(2)]), np.zeros(2))


def test_make_cell():
    with pytest.raises(ConfigException):
        make_cell('transformer', {})
    with pytest.raises(ConfigException):
        VanillaCell(np.eye(2), np.eye(2), nonlinearity='relu')
    cell = make_cell('vanilla', {'V': np.eye(2), 'U': np.eye(2)}, nonlinearity='identity')
    assert cell.nonlinearity == 'identity'
    np.testing.assert_array_equal(cell.b, np.zeros(2))
    with pytest.raises(DimensionException):
        make_cell('vanilla', {'V': np.eye(2), 'U': np.eye(2), 'U_f': np.eye(2)})


def test_readout_is_not_used():
    W = np.ones((5, 2))
    with_readout = VanillaCell(np.eye(2), np.eye(2), W=W)
    without = VanillaCell(np.eye(2), np.eye(2))
    state = LayerState([0.1, 0.2])
    np.testing.assert_array_equal(step(with_readout, state, [1., 1.]).h, step(without, state, [1., 1.]).h)
    np.testing.assert_array_equal(with_readout.W, W)


def test_fingerprint(instance):
    cells = instance('lstm', 1)[0]
    again = instance('lstm', 1)[0]
    assert fingerprint(cells) == fingerprint(again)
    assert len(fingerprint(cells)) == 64
    other = instance('lstm', 2)[0]
    assert fingerprint(cells) != fingerprint(other)
