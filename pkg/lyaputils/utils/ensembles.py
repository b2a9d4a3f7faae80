"""
Seeded generators for weights, input sequences and initial states.

Random numbers come from numpy's PCG64 bit generator seeded through a
SeedSequence with entropy=seed and spawn_key=stream, where the stream
is a tuple of small integers naming the generated object:

    (WEIGHTS, layer, param)     weights, param indexing cell.param_names
    (INPUTS, j)                 input sequence j of a batch
    (STATES, j)                 initial state j of a batch

Identical (seed, stream) give identical numbers on every platform. The
generator algorithm and this stream layout are part of the file
reproducibility contract and only change with a major version.
"""

import numpy as np

from .. import ConfigException
from ..core.cells import LayerState, NetState, ARCHS, make_cell

__all__ = ['RngSpec', 'init_orthogonal', 'init_uniform', 'init_gaussian',
           'parse_init', 'draw_matrix', 'gen_cells', 'gen_inputs',
           'gen_initial_states', 'gen_batch']

WEIGHTS = 0
INPUTS = 1
STATES = 2


class RngSpec(object):
    """ A master seed plus a stream id, see the module doc. """

    def __init__(self, seed, stream=()):
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise ConfigException('seed should be a 64-bit unsigned integer, got %d' % self.seed)
        self.stream = tuple(int(s) for s in stream)

    def child(self, *stream):
        """ A spec for a sub-stream of this one. """
        return RngSpec(self.seed, self.stream + tuple(stream))

    def generator(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return 'RngSpec(seed=%u, stream=%s)' % (self.seed, self.stream)


def _generator(rng):
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngSpec(rng).generator()


def init_orthogonal(n, g, rng):
    """
    Returns g Q with Q Haar-distributed on the orthogonal group, drawn
    via the QR decomposition of a standard Gaussian matrix with the
    signs of the diagonal of R moved into Q.
    """
    if n < 1 or not g > 0:
        raise ConfigException('orthogonal init needs n >= 1 and g > 0, got n=%s, g=%s' % (n, g))
    A = _generator(rng).standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    d = np.diag(R)
    Q = Q * np.where(d < 0, -1.0, 1.0)[None, :]
    return g * Q


def init_uniform(rows, cols, p, rng):
    """ Matrix of i.i.d. entries uniform on [-p, p]. """
    if p < 0:
        raise ConfigException('uniform init needs p >= 0, got %s' % p)
    shape = (rows,) if cols is None else (rows, cols)
    if p == 0:
        return np.zeros(shape)
    return _generator(rng).uniform(-p, p, size=shape)


def init_gaussian(rows, cols, sigma2, rng):
    """ Matrix of i.i.d. N(0, sigma2) entries. """
    if sigma2 < 0:
        raise ConfigException('gaussian init needs sigma2 >= 0, got %s' % sigma2)
    shape = (rows,) if cols is None else (rows, cols)
    if sigma2 == 0:
        return np.zeros(shape)
    return np.sqrt(sigma2) * _generator(rng).standard_normal(shape)


INIT_KINDS = ('orthogonal', 'uniform', 'gaussian', 'identity', 'zeros')


def parse_init(spec):
    """
    Parses an init spec string, 'orthogonal:g2' (squared gain),
    'uniform:p', 'gaussian:sigma2', 'identity' or 'zeros', into a
    (kind, value) pair.
    """
    kind, _, val = str(spec).partition(':')
    if kind not in INIT_KINDS:
        raise ConfigException("init '%s' isn't on the menu %s" % (spec, INIT_KINDS))
    if kind in ('identity', 'zeros'):
        if val:
            raise ConfigException("init '%s' takes no value" % kind)
        return kind, None
    try:
        val = float(val)
    except ValueError:
        raise ConfigException("init '%s' needs a numerical value, as in '%s:0.5'" % (spec, kind))
    if val < 0 or (kind == 'orthogonal' and val == 0):
        raise ConfigException("init '%s' has an invalid value" % spec)
    return kind, val


def draw_matrix(spec, rows, cols, rng):
    """ Draws a rows x cols matrix (a vector if cols is None) from an init spec. """
    kind, val = parse_init(spec) if isinstance(spec, str) else spec
    if kind == 'zeros':
        return np.zeros((rows,) if cols is None else (rows, cols))
    if kind in ('identity', 'orthogonal'):
        if cols is None or rows != cols:
            raise ConfigException("init '%s' needs a square matrix, not %s x %s" % (kind, rows, cols))
        if kind == 'identity':
            return np.eye(rows)
        return init_orthogonal(rows, np.sqrt(val), rng)
    if kind == 'uniform':
        return init_uniform(rows, cols, val, rng)
    return init_gaussian(rows, cols, val, rng)


def _square_only(spec):
    kind = (parse_init(spec) if isinstance(spec, str) else spec)[0]
    return kind in ('identity', 'orthogonal')


def gen_cells(arch, n, n_in, rng, layers=1, init='orthogonal:1', input_init=None,
              bias_init='zeros', nonlinearity='tanh'):
    """
    Draws a stack of cells. The init spec applies to the recurrent
    matrices (V, U_*), input_init to the input matrices (U, W_*) and
    bias_init to the biases. Layers above the first take the hidden
    state below as input.

    Arguments:
    arch        'vanilla', 'lstm' or 'gru'
    n           Hidden units per layer
    n_in        Input dimension of the first layer
    rng         RngSpec or seed

    Keyword arguments:
    layers      Number of stacked layers
    init        Recurrent matrix spec, defaults to 'orthogonal:1'
    input_init  Input matrix spec, defaults to 'identity' for square
                vanilla inputs, to 'uniform:1/sqrt(n_in)' for
                rectangular inputs when init needs a square matrix,
                and otherwise to init
    bias_init   Bias spec, defaults to 'zeros'
    nonlinearity  Vanilla cells only, 'tanh' or 'identity'

    Returns:
    list of cells
    """
    if arch not in ARCHS:
        raise ConfigException("Unknown architecture '%s', should be one of %s" % (arch, sorted(ARCHS)))
    rng = rng if isinstance(rng, RngSpec) else RngSpec(rng)
    cells = []
    for k in range(layers):
        m = n_in if k == 0 else n
        if input_init is not None:
            in_spec = input_init
        elif m != n:
            in_spec = ('uniform', 1. / np.sqrt(m)) if _square_only(init) else init
        elif arch == 'vanilla':
            in_spec = 'identity'
        else:
            in_spec = init
        names = ARCHS[arch].param_names
        params = {}
        for i, name in enumerate(names):
            sub = rng.child(WEIGHTS, k, i)
            if name.startswith('b'):
                params[name] = draw_matrix(bias_init, n, None, sub)
            elif name == 'V' or name.startswith('U_'):
                params[name] = draw_matrix(init, n, n, sub)
            else:
                params[name] = draw_matrix(in_spec, n, m, sub)
        cells.append(make_cell(arch, params, nonlinearity=nonlinearity if arch == 'vanilla' else None))
    return cells


def gen_inputs(T_total, n_in, sigma2_x, batch, rng):
    """ batch x T_total x n_in i.i.d. N(0, sigma2_x) inputs, one stream per sequence. """
    rng = rng if isinstance(rng, RngSpec) else RngSpec(rng)
    out = np.empty((batch, T_total, n_in))
    for j in range(batch):
        out[j] = init_gaussian(T_total, n_in, sigma2_x, rng.child(INPUTS, j))
    return out


def gen_initial_states(cells, sigma2_h0, count, rng):
    """
    count initial NetStates with i.i.d. N(0, sigma2_h0) hidden vectors
    and zero LSTM cell vectors. cells may also be a plain layer size n,
    giving single-layer states without cell vectors.
    """
    rng = rng if isinstance(rng, RngSpec) else RngSpec(rng)
    if isinstance(cells, (int, np.integer)):
        sizes, lstm = [int(cells)], [False]
    else:
        sizes = [c.n_hidden for c in cells]
        lstm = [c.arch == 'lstm' for c in cells]
    states = []
    for j in range(count):
        h = init_gaussian(sum(sizes), None, sigma2_h0, rng.child(STATES, j))
        layers, start = [], 0
        for n, has_c in zip(sizes, lstm):
            layers.append(LayerState(h[start:start + n], np.zeros(n) if has_c else None))
            start += n
        states.append(NetState(layers))
    return states


def gen_batch(cells, config, sigma2_x, sigma2_h0):
    """
    Inputs (warmup_steps + T steps each) and initial states for a
    run_batch() call, both seeded from config.seed.
    """
    rng = RngSpec(config.seed)
    inputs = gen_inputs(config.warmup_steps + config.T, cells[0].n_input, sigma2_x,
                        config.batch_size, rng)
    states = gen_initial_states(cells, sigma2_h0, config.batch_size, rng)
    return inputs, states
