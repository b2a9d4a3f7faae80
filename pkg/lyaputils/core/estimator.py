"""
Estimates the Lyapunov spectrum of input-driven recurrent dynamics. An
orthonormal set of tangent vectors Q is carried along the trajectory,
multiplied by the Jacobian of every step and re-orthonormalized by QR
decomposition every t_on steps. The logarithms of the diagonal of R
are accumulated and divided by the number of steps to give the
exponents of one input sequence; the spectrum of a network is the
index-wise mean over a batch of sequences.
"""

import copy as cp
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg

from .. import (LyapException, ConfigException, DimensionException,
                SequenceLengthException, DegenerateExpansionException)
from .cells import NetState, as_stack, as_net_state, stacked_linearize, fingerprint
from ..utils.features import MARGINAL_TOL, summarize

__docformat__ = 'restructuredtext'

__all__ = ['EstimatorConfig', 'TangentBasis', 'SpectrumResult',
           'propagate_step', 'run_sequence', 'run_batch',
           'convergence_report']

logger = logging.getLogger(__name__)

# log of the expansion recorded for R_ii = 0 under degenerate_policy='clamp',
# close to the log of the smallest subnormal double
LOG_FLOOR = -745.0

# range outside which warmup without QR re-orthonormalizes anyway
RANGE_GUARD = 1e150


class EstimatorConfig(object):
    """
    Settings of the estimator. Options are given as keyword arguments
    and checked against default_opts, where each entry has a default
    value, a type (or a list of allowed values for multiple choice) and
    a doc string. The options end up as attributes.
    """

    default_opts = {
        'T': {
            'value': 100,
            'type': int,
            'doc': 'number of accumulated steps per sequence',
        },
        'warmup_steps': {
            'value': 0,
            'type': int,
            'doc': 'steps run before accumulation starts, consuming the leading inputs',
        },
        't_on': {
            'value': 1,
            'type': int,
            'doc': 'orthonormalization interval in steps',
        },
        'batch_size': {
            'value': 10,
            'type': int,
            'doc': 'number of input sequences',
        },
        'seed': {
            'value': 0,
            'type': int,
            'doc': 'master seed of the generated ensembles (64-bit)',
        },
        'k_exponents': {
            'value': 0,
            'type': int,
            'doc': 'number of tracked tangent vectors (0 means all)',
        },
        'degenerate_policy': {
            'value': 'error',
            'type': ['error', 'clamp'],
            'doc': 'what to do when a tangent vector is annihilated',
        },
        'qr_sign': {
            'value': 'positive',
            'type': ['positive', 'abs'],
            'doc': "'positive' flips signs of Q columns and R rows, 'abs' takes log|R_ii|",
        },
        'warmup_orthonormalize': {
            'value': 'interval',
            'type': ['interval', 'final'],
            'doc': "QR every t_on warmup steps, or only at the end of warmup (with an overflow guard)",
        },
        'workers': {
            'value': 1,
            'type': int,
            'doc': 'number of threads running sequences concurrently',
        },
    }

    # options which do not affect the numbers and are left out of echo()
    volatile_opts = ('workers',)

    def __init__(self, **kwargs):
        opts = self._updateOpts(cp.deepcopy(self.default_opts), **kwargs)
        for key, dct in opts.items():
            setattr(self, key, dct['value'])
        self._check()

    def _updateOpts(self, opts, **kwargs):
        """
        Updates the 'value' fields of an options structure with kwargs,
        checking types and multiple choice menus.
        """
        for key, val in kwargs.items():
            if key not in opts:
                raise ConfigException('Unknown option %s' % str(key))
            typ = opts[key]['type']
            if typ is int and isinstance(val, np.integer):
                val = int(val)
            if type(typ) is type and not (type(val) == typ):
                raise ConfigException('Data type for option %s should be %s, not %s'
                                      % (str(key), str(typ), str(type(val))))
            if type(typ) in (list, tuple) and val not in typ:
                raise ConfigException("Value '%s' isn't on the menu for option %s (%s)"
                                      % (str(val), str(key), str(typ)))
            opts[key]['value'] = val
        return opts

    def _check(self):
        if self.T < 1:
            raise ConfigException('T should be at least 1, got %d' % self.T)
        if self.warmup_steps < 0:
            raise ConfigException('warmup_steps should be non-negative, got %d' % self.warmup_steps)
        if not 1 <= self.t_on <= self.T:
            raise ConfigException('t_on should be in [1, T=%d], got %d' % (self.T, self.t_on))
        if self.batch_size < 1:
            raise ConfigException('batch_size should be at least 1, got %d' % self.batch_size)
        if self.k_exponents < 0:
            raise ConfigException('k_exponents should be non-negative, got %d' % self.k_exponents)
        if not 0 <= self.seed < 2**64:
            raise ConfigException('seed should be a 64-bit unsigned integer, got %d' % self.seed)
        if self.workers < 1:
            raise ConfigException('workers should be at least 1, got %d' % self.workers)

    def n_exponents(self, N):
        """ Number of tracked exponents for a network with N hidden units in total. """
        k = self.k_exponents or N
        if not 1 <= k <= N:
            raise ConfigException('k_exponents should be in [1, N=%d], got %d' % (N, k))
        return k

    def echo(self):
        """ The options as a plain dict, as written into result files. """
        return {key: getattr(self, key) for key in sorted(self.default_opts)
                if key not in self.volatile_opts}

    @classmethod
    def from_echo(cls, dct):
        return cls(**dct)

    def replace(self, **kwargs):
        """ Returns a copy with some options changed. """
        opts = {key: getattr(self, key) for key in self.default_opts}
        opts.update(kwargs)
        return self.__class__(**opts)

    def __eq__(self, other):
        return isinstance(other, EstimatorConfig) and all(
            getattr(self, key) == getattr(other, key) for key in self.default_opts)

    def __repr__(self):
        return 'EstimatorConfig(%s)' % ', '.join('%s=%r' % (k, getattr(self, k)) for k in sorted(self.default_opts))


class TangentBasis(object):
    """
    The tracked tangent vectors Q (N x k), the accumulated log
    expansions gamma, the number of steps folded into gamma and the
    number of steps propagated since the last orthonormalization.
    """

    def __init__(self, Q, gamma=None, steps_accumulated=0, pending=0):
        self.Q = Q
        self.gamma = np.zeros(Q.shape[1]) if gamma is None else gamma
        self.steps_accumulated = steps_accumulated
        self.pending = pending

    @classmethod
    def identity(cls, n, k=None):
        """ The first k columns of the n x n identity. """
        k = n if k is None else k
        return cls(np.eye(n)[:, :k].copy())

    @property
    def k(self):
        return self.Q.shape[1]

    def copy(self):
        return TangentBasis(self.Q.copy(), self.gamma.copy(), self.steps_accumulated, self.pending)

    def orthonormalize(self, accumulate=True, degenerate_policy='error', qr_sign='positive'):
        """
        Replaces Q by the Q factor of its QR decomposition and, if
        accumulating, adds log(R_ii) to gamma. Returns the log
        expansions of this orthonormalization.
        """
        if not np.all(np.isfinite(self.Q)):
            raise DegenerateExpansionException(
                'tangent vectors became non-finite after %u steps, try a smaller t_on'
                % (self.steps_accumulated + self.pending))
        Q, R = scipy.linalg.qr(self.Q, mode='economic', check_finite=False)
        d = np.diag(R)
        if qr_sign == 'positive':
            signs = np.where(d < 0, -1.0, 1.0)
            Q = Q * signs[None, :]
            r = d * signs
        else:
            r = np.abs(d)

        zero = (r == 0)
        if np.any(zero):
            if degenerate_policy == 'error':
                raise DegenerateExpansionException(
                    'tangent vector %u has zero expansion after %u steps'
                    % (np.flatnonzero(zero)[0] + 1, self.steps_accumulated + self.pending))
            logs = np.log(np.where(zero, 1.0, r))
            logs[zero] = LOG_FLOOR
        else:
            logs = np.log(r)

        self.Q = Q
        if accumulate:
            self.gamma = self.gamma + logs
            self.steps_accumulated += self.pending
        self.pending = 0
        return logs


class SpectrumResult(object):
    """
    Exponents of a batch run: per_sequence (batch x k), the index-wise
    mean and population std over sequences, and the running estimates
    trace (batch x samples x (1+k)), whose rows are (t, gamma(t)/t) at
    every orthonormalization step. Results loaded from tabular files
    only carry the mean and the sequence-averaged trace.
    """

    def __init__(self, per_sequence=None, trace=None, config=None, fingerprint=None,
                 mean=None, std=None):
        self.per_sequence = None if per_sequence is None else np.asarray(per_sequence, dtype=np.float64)
        self.trace = None if trace is None else np.asarray(trace, dtype=np.float64)
        self.config = config or {}
        self.fingerprint = fingerprint
        if mean is None:
            mean = np.mean(self.per_sequence, axis=0)
        if std is None and self.per_sequence is not None:
            std = np.std(self.per_sequence, axis=0)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = None if std is None else np.asarray(std, dtype=np.float64)

    @property
    def n_sequences(self):
        return 0 if self.per_sequence is None else self.per_sequence.shape[0]

    @property
    def n_exponents(self):
        return len(self.mean)

    def mean_trace(self):
        """ The running estimates averaged over sequences, rows (t, lambda_1, ...). """
        if self.trace is None:
            return None
        if self.trace.ndim == 2:
            return self.trace
        out = np.mean(self.trace, axis=0)
        out[:, 0] = self.trace[0, :, 0]
        return out

    def features(self, marginal_tol=None):
        return summarize(self.mean, MARGINAL_TOL if marginal_tol is None else marginal_tol)

    def convergence(self, sequence=None):
        """ convergence_report() of one sequence's trace, or of the mean trace. """
        tr = self.mean_trace() if sequence is None else self.trace[sequence]
        return convergence_report(tr)

    def __repr__(self):
        return 'SpectrumResult(sequences=%u, exponents=%u)' % (self.n_sequences, self.n_exponents)


def propagate_step(cells, state, basis, x, t=1, config=None, accumulate=True, orthonormalize=None):
    """
    Advances the state and the tangent basis by one input. The
    Jacobian is evaluated at the pre-update state, the same (h_{t-1},
    x_t) that the step consumes.

    Arguments:
    cells       A cell or a list of stacked cells
    state       The current NetState (or LayerState for one layer)
    basis       The current TangentBasis, left untouched
    x           The input vector of this step

    Keyword arguments:
    t               Step index, orthonormalization happens when t % t_on == 0
    config          EstimatorConfig, defaults to EstimatorConfig()
    accumulate      Whether the log expansions count towards gamma
    orthonormalize  Overrides the t % t_on rule when True or False

    Returns:
    state, basis    The next state and a new TangentBasis
    """
    config = EstimatorConfig() if config is None else config
    new_state, J = stacked_linearize(cells, state, x)
    if J.shape[1] != basis.Q.shape[0]:
        raise DimensionException('tangent basis has %u rows but the Jacobian is %u x %u'
                                 % (basis.Q.shape[0], J.shape[0], J.shape[1]))
    new = TangentBasis(J @ basis.Q, basis.gamma.copy(), basis.steps_accumulated, basis.pending + 1)
    if orthonormalize is None:
        orthonormalize = (t % config.t_on == 0)
    if orthonormalize:
        new.orthonormalize(accumulate=accumulate,
                           degenerate_policy=config.degenerate_policy,
                           qr_sign=config.qr_sign)
    return new_state, new


def _initial_state(cells, h0):
    if h0 is None:
        return NetState([cell.new_state() for cell in cells])
    return as_net_state(cells, h0)


def run_sequence(cells, config, x_seq, h0=None):
    """
    Computes the exponents for one input sequence. The first
    warmup_steps inputs relax the state and the tangent basis without
    counting their expansion, the next T inputs are accumulated. The
    last step of each phase always orthonormalizes, so every step is
    counted exactly once whether or not t_on divides T.

    Returns:
    lam     The k exponents, gamma / T, in tangent-basis order
    trace   Array of rows (t, gamma(t)/t) at every orthonormalization
    """
    cells = as_stack(cells)
    x_seq = np.asarray(x_seq, dtype=np.float64)
    if x_seq.ndim == 1:
        x_seq = x_seq[:, None]
    if x_seq.ndim != 2 or x_seq.shape[1] != cells[0].n_input:
        raise DimensionException('input sequence has shape %s but the first layer expects n_input=%u'
                                 % (x_seq.shape, cells[0].n_input))
    W, T = config.warmup_steps, config.T
    if x_seq.shape[0] < W + T:
        raise SequenceLengthException('input sequence has %u steps but warmup_steps + T = %u'
                                      % (x_seq.shape[0], W + T))

    state = _initial_state(cells, h0)
    N = sum(cell.n_hidden for cell in cells)
    basis = TangentBasis.identity(N, config.n_exponents(N))

    for t in range(1, W + 1):
        if config.warmup_orthonormalize == 'interval':
            orth = (t % config.t_on == 0) or t == W
        else:
            orth = (t == W)
        state, basis = propagate_step(cells, state, basis, x_seq[t - 1], t=t, config=config,
                                      accumulate=False, orthonormalize=orth)
        if not orth and config.warmup_orthonormalize == 'final':
            amax = np.max(np.abs(basis.Q))
            if not RANGE_GUARD**-1 < amax < RANGE_GUARD:
                logger.debug('warmup step %u: tangent vectors out of range, orthonormalizing' % t)
                basis.orthonormalize(accumulate=False, degenerate_policy=config.degenerate_policy,
                                     qr_sign=config.qr_sign)

    times, rows = [], []
    for t in range(1, T + 1):
        orth = (t % config.t_on == 0) or t == T
        state, basis = propagate_step(cells, state, basis, x_seq[W + t - 1], t=t, config=config,
                                      accumulate=True, orthonormalize=orth)
        if orth:
            times.append(t)
            rows.append(basis.gamma / basis.steps_accumulated)

    lam = basis.gamma / T
    trace = np.column_stack((np.array(times, dtype=np.float64), np.array(rows)))
    return lam, trace


def _prefixed(e, prefix):
    """ The same exception class with a prefixed message, LyapException if the class needs more arguments. """
    msg = '%s: %s' % (prefix, e)
    try:
        return e.__class__(msg)
    except TypeError:
        return LyapException(msg)


def run_batch(cells, config, input_ensemble, init_ensemble=None):
    """
    Runs run_sequence() for the first batch_size sequences of the input
    ensemble, each from its own initial state, and reduces the results
    in ascending sequence order. The result does not depend on the
    number of worker threads.

    Arguments:
    cells           A cell or a list of stacked cells
    config          EstimatorConfig
    input_ensemble  Array (batch x steps x n_input) or list of sequences

    Keyword arguments:
    init_ensemble   List of initial NetStates, zero states if None

    Returns:
    SpectrumResult
    """
    cells = as_stack(cells)
    inputs = list(input_ensemble)
    B = config.batch_size
    if len(inputs) < B:
        raise ConfigException('the input ensemble has %u sequences but batch_size is %u' % (len(inputs), B))
    inits = [None] * B if init_ensemble is None else list(init_ensemble)
    if len(inits) < B:
        raise ConfigException('the initial state ensemble has %u states but batch_size is %u' % (len(inits), B))

    def one(j):
        try:
            lam, trace = run_sequence(cells, config, inputs[j], inits[j])
        except LyapException as e:
            raise _prefixed(e, 'sequence %u' % j) from e
        logger.debug('sequence %u: lambda_max %.6f' % (j, np.max(lam)))
        return lam, trace

    logger.info('running %u sequences of %u steps (warmup %u, t_on %u) on %u thread(s)'
                % (B, config.T, config.warmup_steps, config.t_on, config.workers))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(one, range(B)))
    else:
        results = [one(j) for j in range(B)]

    per_sequence = np.vstack([r[0] for r in results])
    trace = np.stack([r[1] for r in results])
    result = SpectrumResult(per_sequence, trace, config=config.echo(), fingerprint=fingerprint(cells))
    logger.info('mean lambda_max %.6f over %u sequences' % (np.max(result.mean), B))
    return result


def convergence_report(trace):
    """
    Deviations |lambda_i(t) - lambda_i(T)| of the running estimates
    from the final one, as rows (t, dev_1, ..., dev_k).
    """
    trace = np.asarray(trace, dtype=np.float64)
    if trace.ndim != 2 or trace.shape[0] == 0:
        raise ValueError('the trace is empty')
    out = np.empty_like(trace)
    out[:, 0] = trace[:, 0]
    out[:, 1:] = np.abs(trace[:, 1:] - trace[-1, 1:])
    return out
