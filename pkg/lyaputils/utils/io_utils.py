"""
Reading and writing of weights, input sequences and spectrum results.

The canonical formats are UTF-8 text: JSON documents for weights and
structured spectra, comma separated tables for plot-ready spectra and
for input sequences. Floats are written with Python's shortest
round-trip representation, so loading and saving again reproduces a
file byte for byte. The schemas are documented in the schemas/ folder
of the repository. Spectra can also be exported to HDF5.
"""

import csv
import json
import logging
import os.path

import h5py
import numpy as np

from .. import FormatException, LyapException
from ..core.cells import ARCHS, make_cell, as_stack
from ..core.estimator import SpectrumResult

__all__ = ['FORMAT_VERSION', 'save_weights', 'load_weights', 'save_spectrum',
           'load_spectrum', 'save_sequences', 'load_sequences']

logger = logging.getLogger(__name__)

FORMAT_VERSION = '1.0'
SPECTRUM_FORMATS = ('structured', 'tabular', 'hdf5')


def _dumps(obj, level=0):
    """
    JSON with lists of scalars on one line, so that matrices come out
    one row per line.
    """
    pad = '  ' * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            return '{}'
        items = ['%s%s: %s' % (pad, json.dumps(k), _dumps(v, level + 1)) for k, v in obj.items()]
        return '{\n' + ',\n'.join(items) + '\n' + '  ' * level + '}'
    if isinstance(obj, (list, tuple)) and any(isinstance(v, (list, tuple, dict)) for v in obj):
        items = ['%s%s' % (pad, _dumps(v, level + 1)) for v in obj]
        return '[\n' + ',\n'.join(items) + '\n' + '  ' * level + ']'
    return json.dumps(obj, allow_nan=False)


def _write_text(path, text):
    with open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write(text)
        if not text.endswith('\n'):
            fp.write('\n')


def _read_json(path):
    with open(path, 'r', encoding='utf-8') as fp:
        text = fp.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatException(path, 'line %u column %u' % (e.lineno, e.colno), e.msg)


def _check_version(path, doc):
    version = doc.get('format_version') if isinstance(doc, dict) else None
    if not isinstance(version, str):
        raise FormatException(path, 'format_version', 'missing or not a string')
    major = version.split('.')[0]
    if major != FORMAT_VERSION.split('.')[0]:
        raise FormatException(path, 'format_version',
                              "unsupported version '%s', this reader handles %s.x"
                              % (version, FORMAT_VERSION.split('.')[0]))


def _field(path, dct, key, where, typ=None):
    if not isinstance(dct, dict) or key not in dct:
        raise FormatException(path, where, "missing field '%s'" % key)
    val = dct[key]
    if typ is not None and not (isinstance(val, typ) and not isinstance(val, bool)):
        raise FormatException(path, '%s.%s' % (where, key), 'should be of type %s' % typ.__name__)
    return val


def save_weights(cells, path):
    """ Writes a stack of cells to a weights file. """
    cells = as_stack(cells)
    archs = set(c.arch for c in cells)
    if len(archs) != 1:
        raise LyapException('all layers of a weights file share one architecture, got %s' % sorted(archs))
    layers = []
    for cell in cells:
        layer = {'n_hidden': cell.n_hidden, 'n_input': cell.n_input}
        if cell.arch == 'vanilla':
            layer['nonlinearity'] = cell.nonlinearity
        layer['matrices'] = {name: cell.params[name].tolist()
                             for name in cell.param_names + cell.optional_names
                             if name in cell.params}
        layers.append(layer)
    doc = {'format_version': FORMAT_VERSION, 'arch': cells[0].arch, 'layers': layers}
    _write_text(path, _dumps(doc))
    logger.info('wrote %u layer(s) to %s' % (len(cells), path))


def load_weights(path):
    """
    Reads a weights file and returns the validated list of cells.
    Parse errors carry line and column, validation errors the field.
    """
    doc = _read_json(path)
    _check_version(path, doc)
    arch = _field(path, doc, 'arch', 'document', str)
    if arch not in ARCHS:
        raise FormatException(path, 'arch', "unknown architecture '%s', should be one of %s" % (arch, sorted(ARCHS)))
    layers = _field(path, doc, 'layers', 'document', list)
    if not layers:
        raise FormatException(path, 'layers', 'no layers')

    cells = []
    for k, layer in enumerate(layers):
        where = 'layers[%u]' % k
        n_hidden = _field(path, layer, 'n_hidden', where, int)
        n_input = _field(path, layer, 'n_input', where, int)
        matrices = _field(path, layer, 'matrices', where, dict)
        params = {}
        for name, val in matrices.items():
            try:
                params[name] = np.array(val, dtype=np.float64)
            except (ValueError, TypeError):
                raise FormatException(path, '%s.matrices.%s' % (where, name), 'not a rectangular array of numbers')
        nonlinearity = layer.get('nonlinearity') if arch == 'vanilla' else None
        try:
            cell = make_cell(arch, params, nonlinearity=nonlinearity)
        except LyapException as e:
            raise FormatException(path, where, str(e))
        if (cell.n_hidden, cell.n_input) != (n_hidden, n_input):
            raise FormatException(path, where, 'declared n_hidden=%u, n_input=%u but the matrices give %u, %u'
                                  % (n_hidden, n_input, cell.n_hidden, cell.n_input))
        cells.append(cell)
    try:
        cells = as_stack(cells)
    except LyapException as e:
        raise FormatException(path, 'layers', str(e))
    logger.info('loaded %u %s layer(s) from %s' % (len(cells), arch, path))
    return cells


def _spectrum_doc(result):
    doc = {
        'format_version': FORMAT_VERSION,
        'kind': 'spectrum',
        'fingerprint': result.fingerprint,
        'config': result.config,
        'n_sequences': result.n_sequences,
        'n_exponents': result.n_exponents,
        'mean': result.mean.tolist(),
        'std': None if result.std is None else result.std.tolist(),
        'per_sequence': None if result.per_sequence is None else result.per_sequence.tolist(),
        'trace': None if result.trace is None else result.trace.tolist(),
    }
    return doc


def _write_tabular(result, path):
    trace = result.mean_trace()
    k = result.n_exponents
    with open(path, 'w', encoding='utf-8', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(['t'] + ['lambda_%u' % (i + 1) for i in range(k)])
        if trace is not None:
            for row in trace:
                writer.writerow(['%d' % row[0]] + [repr(float(v)) for v in row[1:]])
        writer.writerow(['mean'] + [repr(float(v)) for v in result.mean])


def _write_hdf5(result, path):
    # one entry group, metadata as attributes
    with h5py.File(path, 'w') as h5f:
        grp = h5f.create_group('entry0')
        grp.attrs['format_version'] = FORMAT_VERSION
        grp.attrs['fingerprint'] = result.fingerprint or ''
        grp.attrs['config'] = json.dumps(result.config, sort_keys=True)
        grp.create_dataset('mean', data=result.mean)
        for name in ('std', 'per_sequence', 'trace'):
            data = getattr(result, name)
            if data is not None:
                grp.create_dataset(name, data=data, compression='lzf')


def save_spectrum(result, path, format='structured'):
    """
    Writes a SpectrumResult.

    format: 'structured' - JSON with config, per-sequence spectra, mean, std and trace
            'tabular'    - CSV, header t,lambda_1,...; the sequence-averaged trace
                           followed by a row 'mean' holding the mean spectrum
            'hdf5'       - the structured content in an HDF5 file
    """
    if format not in SPECTRUM_FORMATS:
        raise LyapException("format '%s' isn't on the menu %s" % (format, SPECTRUM_FORMATS))
    if format == 'structured':
        _write_text(path, _dumps(_spectrum_doc(result)))
    elif format == 'tabular':
        _write_tabular(result, path)
    else:
        _write_hdf5(result, path)
    logger.info('wrote %s spectrum to %s' % (format, path))


def _load_tabular(path):
    with open(path, 'r', encoding='utf-8', newline='') as fp:
        rows = list(csv.reader(fp))
    if not rows:
        raise FormatException(path, 'line 1', 'empty file')
    header = rows[0]
    k = len(header) - 1
    if k < 1 or header != ['t'] + ['lambda_%u' % (i + 1) for i in range(k)]:
        raise FormatException(path, 'line 1', "header should read 't,lambda_1,...,lambda_k'")
    trace, mean = [], None
    for lineno, row in enumerate(rows[1:], 2):
        if mean is not None:
            raise FormatException(path, 'line %u' % lineno, "rows after the 'mean' row")
        if len(row) != k + 1:
            raise FormatException(path, 'line %u' % lineno, 'expected %u fields, got %u' % (k + 1, len(row)))
        try:
            values = [float(v) for v in row[1:]]
            if row[0] == 'mean':
                mean = values
            else:
                trace.append([float(int(row[0]))] + values)
        except ValueError:
            raise FormatException(path, 'line %u' % lineno, 'not a number')
    if mean is None:
        raise FormatException(path, 'line %u' % len(rows), "missing the final 'mean' row")
    return SpectrumResult(trace=np.array(trace) if trace else None, mean=np.array(mean))


def _load_hdf5(path):
    with h5py.File(path, 'r') as h5f:
        if 'entry0' not in h5f:
            raise FormatException(path, 'entry0', 'group not found')
        grp = h5f['entry0']
        _check_version(path, {'format_version': str(grp.attrs.get('format_version', ''))})
        data = {name: np.array(grp[name]) for name in ('mean', 'std', 'per_sequence', 'trace') if name in grp}
        config = json.loads(grp.attrs.get('config', '{}'))
        fingerprint = str(grp.attrs.get('fingerprint', '')) or None
    return SpectrumResult(data.get('per_sequence'), data.get('trace'), config=config,
                          fingerprint=fingerprint, mean=data['mean'], std=data.get('std'))


def load_spectrum(path):
    """
    Reads a spectrum file of any of the save_spectrum() formats, which
    is told apart by extension (hdf5) or by the first character (JSON).
    The per-sequence block of structured files is checked against the
    stored mean.
    """
    if os.path.splitext(str(path))[1].lower() in ('.h5', '.hdf5'):
        return _load_hdf5(path)
    with open(path, 'r', encoding='utf-8') as fp:
        head = fp.read(256).lstrip()
    if not head.startswith('{'):
        return _load_tabular(path)

    doc = _read_json(path)
    _check_version(path, doc)
    if doc.get('kind') != 'spectrum':
        raise FormatException(path, 'kind', "should be 'spectrum'")
    try:
        mean = np.array(_field(path, doc, 'mean', 'document', list), dtype=np.float64)
        per_sequence = doc.get('per_sequence')
        per_sequence = None if per_sequence is None else np.array(per_sequence, dtype=np.float64)
        std = doc.get('std')
        std = None if std is None else np.array(std, dtype=np.float64)
        trace = doc.get('trace')
        trace = None if trace is None else np.array(trace, dtype=np.float64)
    except (ValueError, TypeError):
        raise FormatException(path, 'document', 'arrays are not rectangular arrays of numbers')
    if per_sequence is not None:
        if per_sequence.ndim != 2 or per_sequence.shape[1] != len(mean):
            raise FormatException(path, 'per_sequence', 'shape %s does not match %u exponents'
                                  % (per_sequence.shape, len(mean)))
        if np.max(np.abs(np.mean(per_sequence, axis=0) - mean)) > 1e-12:
            raise FormatException(path, 'mean', 'does not match the per-sequence spectra')
    return SpectrumResult(per_sequence, trace, config=doc.get('config') or {},
                          fingerprint=doc.get('fingerprint'), mean=mean, std=std)


def save_sequences(sequences, path):
    """
    Writes a batch of input sequences, one comma separated row per time
    step and a blank line between sequences.
    """
    lines = ['# lyaputils sequences, format_version %s' % FORMAT_VERSION]
    for j, seq in enumerate(sequences):
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim == 1:
            seq = seq[:, None]
        if j:
            lines.append('')
        lines.extend(','.join(repr(float(v)) for v in row) for row in seq)
    _write_text(path, '\n'.join(lines))
    logger.info('wrote %u sequence(s) to %s' % (len(sequences), path))


def load_sequences(path):
    """
    Reads a batch of input sequences. Lines starting with '#' are
    comments, blank lines separate sequences. All rows must have the
    same number of values and all sequences the same length.

    Returns:
    array (batch x steps x n_input)
    """
    blocks, block = [], []
    n_in = None
    with open(path, 'r', encoding='utf-8') as fp:
        lines = fp.read().split('\n')
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if line.startswith('#'):
            continue
        if not line:
            if block:
                blocks.append(block)
                block = []
            continue
        where = 'block %u row %u (line %u)' % (len(blocks), len(block), lineno)
        try:
            row = [float(v) for v in line.split(',')]
        except ValueError:
            raise FormatException(path, where, 'not a comma separated row of numbers')
        if n_in is None:
            n_in = len(row)
        elif len(row) != n_in:
            raise FormatException(path, where, 'expected %u values, got %u' % (n_in, len(row)))
        block.append(row)
    if block:
        blocks.append(block)
    if not blocks:
        raise FormatException(path, 'line 1', 'no sequences found')
    for j, b in enumerate(blocks):
        if len(b) != len(blocks[0]):
            raise FormatException(path, 'block %u' % j, 'has %u steps but block 0 has %u' % (len(b), len(blocks[0])))
    out = np.array(blocks, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise FormatException(path, 'document', 'non-finite values')
    logger.info('loaded %u sequence(s) of %u steps from %s' % (out.shape[0], out.shape[1], path))
    return out
