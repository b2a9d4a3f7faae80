"""
Implements the recurrent cells whose driven dynamics are analyzed: the
vanilla RNN, the LSTM and the GRU. Each cell is a container for the
weights and biases of one recurrent layer, and knows how to take a
forward step and how to evaluate its analytical Jacobians with respect
to the previous hidden state and to the input. Layers are stacked by
passing lists of cells to the module level functions, in which case
the hidden state of layer k-1 at time t is the input of layer k.

All arithmetic is float64 and every function here is pure.
"""

import hashlib
import numpy as np
from scipy.special import expit

from .. import DimensionException, ConfigException
from ..utils.array_utils import embedMatrix, rowScale, blockSlices

__docformat__ = 'restructuredtext'

__all__ = ['LayerState', 'NetState', 'CellParams', 'VanillaCell',
           'LSTMCell', 'GRUCell', 'ARCHS', 'make_cell', 'step',
           'jacobian_state', 'jacobian_input', 'stacked_step',
           'stacked_linearize', 'stacked_jacobian',
           'finite_difference_jacobian', 'as_stack', 'as_net_state',
           'fingerprint']


class LayerState(object):
    """
    Hidden state of one layer at one time step. The cell vector c is
    only carried by LSTM layers and is None otherwise.
    """

    def __init__(self, h, c=None):
        self.h = np.array(h, dtype=np.float64).reshape(-1)
        self.c = None if c is None else np.array(c, dtype=np.float64).reshape(-1)
        if self.c is not None and self.c.shape != self.h.shape:
            raise DimensionException('cell vector c has length %u but h has length %u'
                                     % (len(self.c), len(self.h)))

    def copy(self):
        return LayerState(self.h, self.c)

    def __repr__(self):
        return 'LayerState(n=%u, lstm=%s)' % (len(self.h), self.c is not None)


class NetState(object):
    """
    Hidden states of a stack of layers, ordered from the input side.
    """

    def __init__(self, layers):
        self.layers = [l if isinstance(l, LayerState) else LayerState(l) for l in layers]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, k):
        return self.layers[k]

    def __iter__(self):
        return iter(self.layers)

    @property
    def sizes(self):
        return [len(l.h) for l in self.layers]

    @property
    def h(self):
        """ The concatenated hidden state of all layers. """
        return np.concatenate([l.h for l in self.layers])

    def with_h(self, h):
        """
        Returns a new state with the concatenated hidden vector replaced
        by h, keeping the LSTM cell vectors.
        """
        h = np.asarray(h, dtype=np.float64)
        if len(h) != sum(self.sizes):
            raise DimensionException('hidden vector has length %u, expected %u'
                                     % (len(h), sum(self.sizes)))
        return NetState([LayerState(h[sl], l.c)
                         for sl, l in zip(blockSlices(self.sizes), self.layers)])

    def copy(self):
        return NetState([l.copy() for l in self.layers])

    def __repr__(self):
        return 'NetState(sizes=%s)' % self.sizes


class CellParams(object):
    """
    Base class for recurrent cells. Subclasses list their parameter
    arrays in param_names, which also fixes the order used in files and
    fingerprints, and implement _forward(), _jacobians().
    """

    arch = None
    param_names = ()
    optional_names = ()
    # the input matrix named in dimension errors
    input_matrix = None

    def __init__(self, n_hidden, n_input, params, nonlinearity=None):
        self.n_hidden = int(n_hidden)
        self.n_input = int(n_input)
        self.nonlinearity = nonlinearity
        self.params = {}
        for name, val in params.items():
            if val is None:
                continue
            self.params[name] = np.array(val, dtype=np.float64)
        self.validate()

    def __getattr__(self, name):
        # gives access to the weights as cell.V, cell.U_f, ...
        params = self.__dict__.get('params', {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def expected_shape(self, name):
        """ The shape a parameter array should have, judging by its name. """
        n, m = self.n_hidden, self.n_input
        if name.startswith('b'):
            return (n,)
        if name in ('V',) or name.startswith('U_'):
            return (n, n)
        if name in ('U',) or name.startswith('W_'):
            return (n, m)
        if name == 'W':
            return (None, n)
        raise KeyError(name)

    def validate(self):
        """
        Checks that all parameter arrays are present, finite and of
        mutually consistent dimensions, raising DimensionException
        naming the offending matrix otherwise.
        """
        if self.n_hidden < 1 or self.n_input < 1:
            raise DimensionException('%s cell needs positive n_hidden and n_input, got %u and %u'
                                     % (self.arch, self.n_hidden, self.n_input))
        for name in self.param_names:
            if name not in self.params:
                if name.startswith('b'):
                    self.params[name] = np.zeros(self.n_hidden)
                else:
                    raise DimensionException('%s cell is missing matrix %s' % (self.arch, name))
        for name, val in self.params.items():
            if name not in self.param_names + self.optional_names:
                raise DimensionException('%s cell has no parameter %s' % (self.arch, name))
            shape = self.expected_shape(name)
            if val.ndim != len(shape) or any(s is not None and s != v for s, v in zip(shape, val.shape)):
                raise DimensionException('matrix %s has shape %s, expected %s'
                                         % (name, val.shape, tuple('?' if s is None else s for s in shape)))
            if not np.all(np.isfinite(val)):
                raise DimensionException('matrix %s has non-finite entries' % name)

    def new_state(self, h=None):
        """ A state for this layer, zero unless h is given. """
        h = np.zeros(self.n_hidden) if h is None else h
        return LayerState(h)

    def check_call(self, state, x):
        """
        Brings state and input to canonical form and checks their
        dimensions against the cell.
        """
        if not isinstance(state, LayerState):
            state = LayerState(state)
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if len(state.h) != self.n_hidden:
            raise DimensionException('hidden state has length %u but %s cell has n_hidden=%u'
                                     % (len(state.h), self.arch, self.n_hidden))
        if len(x) != self.n_input:
            raise DimensionException('input has length %u but matrix %s expects n_input=%u'
                                     % (len(x), self.input_matrix, self.n_input))
        return state, x

    def _forward(self, state, x):
        raise NotImplementedError

    def _jacobians(self, fw, state, x, wrt_input):
        raise NotImplementedError

    def step(self, state, x):
        """ Takes one time step, returning the next LayerState. """
        state, x = self.check_call(state, x)
        return self._forward(state, x)['next']

    def linearize(self, state, x, wrt_input=False):
        """
        Takes one step and evaluates the Jacobians at the pre-update
        state in the same pass. Returns (next_state, J_state, J_input),
        with J_input None unless wrt_input is set.
        """
        state, x = self.check_call(state, x)
        fw = self._forward(state, x)
        J, Jx = self._jacobians(fw, state, x, wrt_input)
        return fw['next'], J, Jx

    def jacobian_state(self, state, x):
        return self.linearize(state, x)[1]

    def jacobian_input(self, state, x):
        return self.linearize(state, x, wrt_input=True)[2]

    def update_hash(self, hasher):
        hasher.update(('%s:%u:%u:%s;' % (self.arch, self.n_hidden, self.n_input,
                                         self.nonlinearity or '')).encode('ascii'))
        for name in self.param_names + self.optional_names:
            if name in self.params:
                hasher.update(name.encode('ascii'))
                hasher.update(self.params[name].astype('<f8').tobytes())

    def __repr__(self):
        return '%s(n_hidden=%u, n_input=%u)' % (self.__class__.__name__, self.n_hidden, self.n_input)


class VanillaCell(CellParams):
    """
    The vanilla RNN, h_t = phi(a_t) with a_t = V h_{t-1} + U x_t + b.
    The readout W is optional, stored but not used.
    """

    arch = 'vanilla'
    param_names = ('V', 'U', 'b')
    optional_names = ('W',)
    input_matrix = 'U'
    nonlinearities = ('tanh', 'identity')

    def __init__(self, V, U, b=None, nonlinearity='tanh', W=None):
        V = np.asarray(V, dtype=np.float64)
        U = np.asarray(U, dtype=np.float64)
        if nonlinearity not in self.nonlinearities:
            raise ConfigException("nonlinearity '%s' isn't on the menu %s" % (nonlinearity, self.nonlinearities))
        if V.ndim != 2 or U.ndim != 2:
            raise DimensionException('matrices V and U should be 2D, got shapes %s and %s' % (V.shape, U.shape))
        super().__init__(V.shape[0], U.shape[1], {'V': V, 'U': U, 'b': b, 'W': W},
                         nonlinearity=nonlinearity)

    def _forward(self, state, x):
        a = self.V @ state.h + self.U @ x + self.b
        if self.nonlinearity == 'tanh':
            h = np.tanh(a)
            dphi = 1.0 - h**2
        else:
            h = a
            dphi = np.ones_like(a)
        return {'a': a, 'dphi': dphi, 'next': LayerState(h)}

    def _jacobians(self, fw, state, x, wrt_input):
        J = rowScale(fw['dphi'], self.V)
        Jx = rowScale(fw['dphi'], self.U) if wrt_input else None
        return J, Jx


class LSTMCell(CellParams):
    """
    The LSTM with forget, input and output gates f, i, o and cell
    candidate c,

        y_* = W_* x_t + U_* h_{t-1} + b_*
        c_t = f_t o c_{t-1} + i_t o tanh(y_c)
        h_t = o_t o tanh(c_t)

    The Jacobians are partial derivatives of h_t with c_{t-1} held fixed,
    so there are as many exponents as hidden units.
    """

    arch = 'lstm'
    gates = ('f', 'i', 'o', 'c')
    param_names = tuple('%s_%s' % (m, g) for g in gates for m in ('W', 'U', 'b'))
    input_matrix = 'W_f'

    def __init__(self, **params):
        if 'U_f' not in params or 'W_f' not in params:
            raise DimensionException('lstm cell is missing matrix %s' % ('U_f' if 'U_f' not in params else 'W_f'))
        U_f = np.asarray(params['U_f'])
        W_f = np.asarray(params['W_f'])
        if U_f.ndim != 2 or W_f.ndim != 2:
            raise DimensionException('matrices U_f and W_f should be 2D, got shapes %s and %s' % (U_f.shape, W_f.shape))
        super().__init__(U_f.shape[0], W_f.shape[1], params)

    def new_state(self, h=None, c=None):
        h = np.zeros(self.n_hidden) if h is None else h
        c = np.zeros(self.n_hidden) if c is None else c
        return LayerState(h, c)

    def check_call(self, state, x):
        state, x = super().check_call(state, x)
        if state.c is None:
            raise DimensionException('lstm state must carry both h and c')
        return state, x

    def _forward(self, state, x):
        y = {g: self.params['W_' + g] @ x + self.params['U_' + g] @ state.h + self.params['b_' + g]
             for g in self.gates}
        f, i, o = expit(y['f']), expit(y['i']), expit(y['o'])
        g = np.tanh(y['c'])
        c = f * state.c + i * g
        tc = np.tanh(c)
        return {'f': f, 'i': i, 'o': o, 'g': g, 'tc': tc,
                'next': LayerState(o * tc, c)}

    def _derivative(self, fw, state, kind):
        # kind is 'U' for d/dh_{t-1}, 'W' for d/dx_t
        f, i, o, g, tc = fw['f'], fw['i'], fw['o'], fw['g'], fw['tc']
        df = rowScale(f * (1 - f), self.params[kind + '_f'])
        di = rowScale(i * (1 - i), self.params[kind + '_i'])
        do = rowScale(o * (1 - o), self.params[kind + '_o'])
        dc = (rowScale(state.c, df) + rowScale(g, di)
              + rowScale(i * (1 - g**2), self.params[kind + '_c']))
        return rowScale(tc, do) + rowScale(o * (1 - tc**2), dc)

    def _jacobians(self, fw, state, x, wrt_input):
        J = self._derivative(fw, state, 'U')
        Jx = self._derivative(fw, state, 'W') if wrt_input else None
        return J, Jx


class GRUCell(CellParams):
    """
    The GRU with update gate z, reset gate r and candidate c, the reset
    gate acting on h_{t-1} before the recurrent candidate matrix,

        z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
        r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
        n_t = tanh(W_c x_t + U_c (r_t o h_{t-1}) + b_c)
        h_t = (1 - z_t) o n_t + z_t o h_{t-1}
    """

    arch = 'gru'
    gates = ('z', 'r', 'c')
    param_names = tuple('%s_%s' % (m, g) for g in gates for m in ('W', 'U', 'b'))
    input_matrix = 'W_z'

    def __init__(self, **params):
        if 'U_z' not in params or 'W_z' not in params:
            raise DimensionException('gru cell is missing matrix %s' % ('U_z' if 'U_z' not in params else 'W_z'))
        U_z = np.asarray(params['U_z'])
        W_z = np.asarray(params['W_z'])
        if U_z.ndim != 2 or W_z.ndim != 2:
            raise DimensionException('matrices U_z and W_z should be 2D, got shapes %s and %s' % (U_z.shape, W_z.shape))
        super().__init__(U_z.shape[0], W_z.shape[1], params)

    def _forward(self, state, x):
        p, h = self.params, state.h
        z = expit(p['W_z'] @ x + p['U_z'] @ h + p['b_z'])
        r = expit(p['W_r'] @ x + p['U_r'] @ h + p['b_r'])
        n = np.tanh(p['W_c'] @ x + p['U_c'] @ (r * h) + p['b_c'])
        return {'z': z, 'r': r, 'n': n, 'next': LayerState((1 - z) * n + z * h)}

    def _jacobians(self, fw, state, x, wrt_input):
        p, h = self.params, state.h
        z, r, n = fw['z'], fw['r'], fw['n']
        sz, sr, dn = z * (1 - z), r * (1 - r), 1 - n**2

        dz = rowScale(sz, p['U_z'])
        dr = rowScale(sr, p['U_r'])
        dcand = rowScale(dn, p['U_c'] * r[None, :] + p['U_c'] @ rowScale(h, dr))
        J = rowScale(h - n, dz) + rowScale(1 - z, dcand) + np.diag(z)

        Jx = None
        if wrt_input:
            dz_x = rowScale(sz, p['W_z'])
            dr_x = rowScale(sr, p['W_r'])
            dcand_x = rowScale(dn, p['W_c'] + p['U_c'] @ rowScale(h, dr_x))
            Jx = rowScale(h - n, dz_x) + rowScale(1 - z, dcand_x)
        return J, Jx


ARCHS = {'vanilla': VanillaCell, 'lstm': LSTMCell, 'gru': GRUCell}


def make_cell(arch, params, nonlinearity=None):
    """
    Builds a cell of the named architecture from a dict of parameter
    arrays, as read from a weights file or drawn by an ensemble.
    """
    if arch not in ARCHS:
        raise ConfigException("Unknown architecture '%s', should be one of %s" % (arch, sorted(ARCHS)))
    if arch == 'vanilla':
        params = dict(params)
        for name in ('V', 'U'):
            if name not in params:
                raise DimensionException('vanilla cell is missing matrix %s' % name)
        V, U = params.pop('V'), params.pop('U')
        b, W = params.pop('b', None), params.pop('W', None)
        if params:
            raise DimensionException('vanilla cell has no parameter %s' % sorted(params)[0])
        return VanillaCell(V, U, b=b, W=W, nonlinearity=nonlinearity or 'tanh')
    return ARCHS[arch](**params)


def step(cell, state, x):
    """ One forward step of a single layer. """
    return cell.step(state, x)


def jacobian_state(cell, state, x):
    """ dh_t/dh_{t-1} of a single layer, evaluated at (h_{t-1}, x_t). """
    return cell.jacobian_state(state, x)


def jacobian_input(cell, state, x):
    """ dh_t/dx_t of a single layer, evaluated at (h_{t-1}, x_t). """
    return cell.jacobian_input(state, x)


def as_stack(cells):
    """
    Returns cells as a list, checking that each layer's input size
    matches the hidden size of the layer below.
    """
    if isinstance(cells, CellParams):
        cells = [cells]
    cells = list(cells)
    if not cells:
        raise DimensionException('the layer stack is empty')
    for k in range(1, len(cells)):
        if cells[k].n_input != cells[k - 1].n_hidden:
            raise DimensionException('layer %u has n_input=%u but layer %u has n_hidden=%u'
                                     % (k + 1, cells[k].n_input, k, cells[k - 1].n_hidden))
    return cells


def as_net_state(cells, state):
    """ Brings a LayerState, a bare vector or a list of layers to a NetState matching cells. """
    if isinstance(state, NetState):
        pass
    elif isinstance(state, LayerState):
        state = NetState([state])
    elif isinstance(state, (list, tuple)) and state and isinstance(state[0], LayerState):
        state = NetState(state)
    else:
        state = NetState([LayerState(state)])
    if len(state) != len(cells):
        raise DimensionException('state has %u layers but the stack has %u' % (len(state), len(cells)))
    return state


def stacked_step(cells, state, x):
    """ One forward step of a stack of layers, returning the next NetState. """
    cells = as_stack(cells)
    state = as_net_state(cells, state)
    layers = []
    for cell, layer in zip(cells, state):
        nxt = cell.step(layer, x)
        layers.append(nxt)
        x = nxt.h
    return NetState(layers)


def stacked_linearize(cells, state, x):
    """
    Takes one step of a stack and assembles the block lower-triangular
    Jacobian of the concatenated hidden state in the same pass. The
    block row of layer k is the layer's input Jacobian times the block
    row of layer k-1, plus its own state Jacobian on the diagonal.

    Returns (next_state, J).
    """
    cells = as_stack(cells)
    state = as_net_state(cells, state)
    sizes = [c.n_hidden for c in cells]
    slices = blockSlices(sizes)
    J = np.zeros((sum(sizes), sum(sizes)))
    layers = []
    for k, (cell, layer) in enumerate(zip(cells, state)):
        nxt, Jkk, Jin = cell.linearize(layer, x, wrt_input=(k > 0))
        start = slices[k].start
        J = embedMatrix(Jkk, J, (start, start))
        if k > 0:
            J = embedMatrix(Jin @ J[slices[k - 1], :start], J, (start, 0))
        layers.append(nxt)
        x = nxt.h
    return NetState(layers), J


def stacked_jacobian(cells, state, x):
    """ The full Jacobian of the stacked hidden state, see stacked_linearize(). """
    return stacked_linearize(cells, state, x)[1]


def finite_difference_jacobian(cells, state, x, eps=1e-5, wrt='state'):
    """
    Central-difference approximation of the Jacobian of the (stacked)
    step map, column j = (step(h + eps e_j) - step(h - eps e_j)) / 2eps.
    LSTM cell vectors are held fixed, matching jacobian_state().

    Arguments:
    cells       A cell or a list of cells
    state       The pre-update state
    x           The input vector

    Keyword arguments:
    eps         Step size, defaults to 1e-5
    wrt         'state' for dh_t/dh_{t-1}, 'input' for dh_t/dx_t

    Returns:
    J           The approximate Jacobian
    """
    if not eps > 0:
        raise ValueError('eps should be positive, got %s' % eps)
    assert wrt in ('state', 'input')
    cells = as_stack(cells)
    state = as_net_state(cells, state)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    h0 = state.h

    if wrt == 'state':
        def f(v):
            return stacked_step(cells, state.with_h(v), x).h
        v0 = h0
    else:
        def f(v):
            return stacked_step(cells, state, v).h
        v0 = x

    J = np.zeros((len(h0), len(v0)))
    for j in range(len(v0)):
        vp, vm = v0.copy(), v0.copy()
        vp[j] += eps
        vm[j] -= eps
        J[:, j] = (f(vp) - f(vm)) / (2 * eps)
    return J


def fingerprint(cells):
    """ SHA-256 hex digest identifying the weights of a stack. """
    hasher = hashlib.sha256()
    for cell in as_stack(cells):
        cell.update_hash(hasher)
    return hasher.hexdigest()
