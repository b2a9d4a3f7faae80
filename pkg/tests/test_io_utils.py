import json

import numpy as np
import pytest

from lyaputils import FormatException, LyapException
from lyaputils.core.cells import VanillaCell, fingerprint
from lyaputils.core.estimator import EstimatorConfig, SpectrumResult, run_sequence, run_batch
from lyaputils.utils.ensembles import gen_cells, gen_batch, gen_inputs
from lyaputils.utils.io_utils import (save_weights, load_weights, save_spectrum, load_spectrum,
                                      save_sequences, load_sequences)


@pytest.fixture
def result():
    config = EstimatorConfig(T=12, t_on=4, batch_size=3, seed=1)
    cells = gen_cells('lstm', 3, 2, config.seed, init='uniform:0.5')
    inputs, states = gen_batch(cells, config, 0.6, 1.)
    return run_batch(cells, config, inputs, states)


@pytest.mark.parametrize('arch, layers', [('vanilla', 1), ('lstm', 2), ('gru', 3)])
def test_weights_round_trip(tmp_path, arch, layers):
    cells = gen_cells(arch, 4, 3, 5, layers=layers, init='uniform:0.5', input_init='uniform:0.5',
                      bias_init='gaussian:0.1')
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    save_weights(cells, first)
    loaded = load_weights(first)
    assert [c.arch for c in loaded] == [arch] * layers
    for a, b in zip(cells, loaded):
        for name in a.param_names:
            np.testing.assert_array_equal(a.params[name], b.params[name])
    assert fingerprint(loaded) == fingerprint(cells)
    save_weights(loaded, second)
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes().endswith(b'\n')


def test_weights_keep_readout_and_nonlinearity(tmp_path):
    cell = VanillaCell(np.eye(2), np.ones((2, 1)), nonlinearity='identity', W=[[1., -1.]])
    save_weights(cell, tmp_path / 'w.json')
    loaded = load_weights(tmp_path / 'w.json')[0]
    assert loaded.nonlinearity == 'identity'
    np.testing.assert_array_equal(loaded.W, [[1., -1.]])


def test_hand_written_file(tmp_path, one_unit):
    path = tmp_path / 'one.json'
    path.write_text(one_unit)
    cells = load_weights(path)
    lam, _ = run_sequence(cells, EstimatorConfig(T=10), np.zeros((10, 1)))
    np.testing.assert_allclose(lam, [np.log(2)], rtol=1e-14)


def test_truncated_file(tmp_path, one_unit):
    path = tmp_path / 'broken.json'
    path.write_text(one_unit[:120])
    with pytest.raises(FormatException) as e:
        load_weights(path)
    assert 'line' in e.value.location and str(path) in str(e.value)


@pytest.mark.parametrize('change, where', [
    (lambda d: d.update(format_version='2.0'), 'format_version'),
    (lambda d: d.pop('format_version'), 'format_version'),
    (lambda d: d.update(arch='transformer'), 'arch'),
    (lambda d: d.update(layers=[]), 'layers'),
    (lambda d: d['layers'][0].pop('n_input'), 'layers[0]'),
    (lambda d: d['layers'][0]['matrices'].update(V=[[1, 2], [3]]), 'layers[0].matrices.V'),
    (lambda d: d['layers'][0].update(n_hidden=2), 'layers[0]'),
])
def test_invalid_weights(tmp_path, one_unit, change, where):
    doc = json.loads(one_unit)
    change(doc)
    path = tmp_path / 'w.json'
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatException) as e:
        load_weights(path)
    assert e.value.location == where


def test_dimension_mismatch_names_matrix(tmp_path):
    cells = gen_cells('lstm', 3, 2, 0, init='uniform:0.5')
    path = tmp_path / 'w.json'
    save_weights(cells, path)
    doc = json.loads(path.read_text())
    doc['layers'][0]['matrices']['U_i'] = [[0., 0.], [0., 0.], [0., 0.]]
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatException, match='U_i'):
        load_weights(path)


def test_stack_mismatch(tmp_path, one_unit):
    doc = json.loads(one_unit)
    doc['layers'].append({'n_hidden': 1, 'n_input': 2,
                          'matrices': {'V': [[1.]], 'U': [[1., 1.]]}})
    path = tmp_path / 'w.json'
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatException) as e:
        load_weights(path)
    assert e.value.location == 'layers'


def test_mixed_architectures_rejected(tmp_path):
    cells = gen_cells('vanilla', 2, 2, 0) + gen_cells('gru', 2, 2, 0)
    with pytest.raises(LyapException):
        save_weights(cells, tmp_path / 'w.json')


def test_structured_round_trip(tmp_path, result):
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    save_spectrum(result, first)
    loaded = load_spectrum(first)
    np.testing.assert_array_equal(loaded.per_sequence, result.per_sequence)
    np.testing.assert_array_equal(loaded.trace, result.trace)
    np.testing.assert_array_equal(loaded.std, result.std)
    assert loaded.config == result.config and loaded.fingerprint == result.fingerprint
    assert EstimatorConfig.from_echo(loaded.config).T == 12
    save_spectrum(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_tabular(tmp_path, result):
    path = tmp_path / 'a.csv'
    save_spectrum(result, path, format='tabular')
    lines = path.read_text().splitlines()
    assert lines[0] == 't,lambda_1,lambda_2,lambda_3'
    assert [l.split(',')[0] for l in lines[1:]] == ['4', '8', '12', 'mean']
    loaded = load_spectrum(path)
    np.testing.assert_array_equal(loaded.mean, result.mean)
    np.testing.assert_array_equal(loaded.mean_trace(), result.mean_trace())
    again = tmp_path / 'b.csv'
    save_spectrum(loaded, again, format='tabular')
    assert path.read_bytes() == again.read_bytes()


def test_tabular_errors(tmp_path):
    path = tmp_path / 'a.csv'
    path.write_text('t,lambda_1\n1,0.5\n')
    with pytest.raises(FormatException, match='mean'):
        load_spectrum(path)
    path.write_text('t,lambda_2\nmean,0.5\n')
    with pytest.raises(FormatException, match='header'):
        load_spectrum(path)
    path.write_text('t,lambda_1\n1,0.5,3\nmean,0.5\n')
    with pytest.raises(FormatException) as e:
        load_spectrum(path)
    assert e.value.location == 'line 2'


def test_hdf5(tmp_path, result):
    path = tmp_path / 'a.h5'
    save_spectrum(result, path, format='hdf5')
    loaded = load_spectrum(path)
    np.testing.assert_array_equal(loaded.per_sequence, result.per_sequence)
    np.testing.assert_array_equal(loaded.trace, result.trace)
    assert loaded.config == result.config and loaded.fingerprint == result.fingerprint


def test_unknown_format(tmp_path, result):
    with pytest.raises(LyapException):
        save_spectrum(result, tmp_path / 'a.txt', format='yaml')


def test_mean_is_checked(tmp_path, result):
    path = tmp_path / 'a.json'
    save_spectrum(result, path)
    doc = json.loads(path.read_text())
    doc['mean'][0] += 1e-9
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatException) as e:
        load_spectrum(path)
    assert e.value.location == 'mean'


def test_ten_sequences(tmp_path):
    config = EstimatorConfig(T=100, batch_size=10)
    cells = gen_cells('lstm', 8, 4, 0, init='uniform:0.08')
    inputs, states = gen_batch(cells, config, 1., 0.)
    save_spectrum(run_batch(cells, config, inputs, states), tmp_path / 's.json')
    assert load_spectrum(tmp_path / 's.json').per_sequence.shape == (10, 8)


def test_sequences_round_trip(tmp_path):
    batch = gen_inputs(15, 3, 0.6, 4, 8)
    path = tmp_path / 'x.csv'
    save_sequences(batch, path)
    np.testing.assert_array_equal(load_sequences(path), batch)


def test_sequences_format(tmp_path):
    path = tmp_path / 'x.csv'
    path.write_text('# two sequences\n1,2\n3,4\n\n\n# second\n5,6\n7,8\n')
    np.testing.assert_array_equal(load_sequences(path), [[[1, 2], [3, 4]], [[5, 6], [7, 8]]])


def test_mocap_shaped_blocks(tmp_path):
    batch = np.random.default_rng(0).standard_normal((3, 25, 20))
    path = tmp_path / 'x.csv'
    save_sequences(batch, path)
    assert load_sequences(path).shape == (3, 25, 20)


def test_zero_sequence_is_autonomous(tmp_path):
    path = tmp_path / 'x.csv'
    save_sequences(np.zeros((1, 30, 1)), path)
    x = load_sequences(path)
    cell = VanillaCell([[0.5]], [[1.]])
    lam, _ = run_sequence(cell, EstimatorConfig(T=30), x[0])
    np.testing.assert_allclose(lam, [np.log(0.5)], atol=1e-14)


def test_ragged_sequences(tmp_path):
    path = tmp_path / 'x.csv'
    path.write_text('1,2\n3,4\n\n5,6\n7,8\n9\n')
    with pytest.raises(FormatException) as e:
        load_sequences(path)
    assert e.value.location.startswith('block 1 row 2')
    path.write_text('1,2\n3,4\n\n5,6\n')
    with pytest.raises(FormatException, match='block 1'):
        load_sequences(path)
    path.write_text('1,2\n3,x\n')
    with pytest.raises(FormatException, match='block 0 row 1'):
        load_sequences(path)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_weights(tmp_path / 'nothing.json')


def test_summary_of_loaded_result(tmp_path):
    result = SpectrumResult([[0.2, -1.], [0.4, -1.]])
    save_spectrum(result, tmp_path / 's.json')
    assert load_spectrum(tmp_path / 's.json').features().regime == 'chaotic'
