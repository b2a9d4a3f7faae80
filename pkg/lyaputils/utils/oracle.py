"""
Brute force computations the estimator is checked against, and the
built-in check suite behind the 'check' command. The exponent oracles
form the product of all Jacobians explicitly, so they are O(T N^3) and
only meant for short trajectories of small test systems.
"""

import logging

import numpy as np
import scipy.linalg

from .. import DegenerateExpansionException
from ..core.cells import (NetState, VanillaCell, as_stack, as_net_state, stacked_linearize,
                          jacobian_state, jacobian_input, finite_difference_jacobian)
from ..core.estimator import EstimatorConfig, TangentBasis, run_sequence, propagate_step
from .ensembles import (RngSpec, gen_cells, gen_inputs, gen_initial_states,
                        init_orthogonal, init_gaussian)

__all__ = ['product_qr_exponents', 'svd_exponents', 'log_det_rate',
           'trajectory_jacobians', 'max_scaled_error', 'run_checks',
           'CHECK_TOLERANCES']

logger = logging.getLogger(__name__)

# tolerances of the built-in checks
CHECK_TOLERANCES = {
    'jacobian': 1e-5,
    'telescoping': 1e-8,
    'volume': 1e-8,
    'linear': 1e-10,
    'orthonormality': 1e-10,
}


def _product(jacobians):
    jacobians = [np.asarray(J, dtype=np.float64) for J in jacobians]
    if not jacobians:
        raise ValueError('the Jacobian list is empty')
    P = np.eye(jacobians[0].shape[1])
    for J in jacobians:
        P = J @ P
    if not np.all(np.isfinite(P)):
        raise DegenerateExpansionException('the Jacobian product over- or underflowed after %u steps'
                                           % len(jacobians))
    return P, len(jacobians)


def product_qr_exponents(jacobians):
    """
    log(R_ii) / T from a single positive-diagonal QR decomposition of
    the explicit product J_T ... J_1.
    """
    P, T = _product(jacobians)
    R = scipy.linalg.qr(P, mode='r', check_finite=False)[0]
    r = np.abs(np.diag(R))
    if np.any(r == 0):
        raise DegenerateExpansionException('the Jacobian product is singular')
    return np.log(r) / T


def svd_exponents(jacobians):
    """ log of the singular values of J_T ... J_1, divided by T, in descending order. """
    P, T = _product(jacobians)
    s = scipy.linalg.svdvals(P, check_finite=False)
    if np.any(s == 0):
        raise DegenerateExpansionException('the Jacobian product is singular')
    return np.sort(np.log(s) / T)[::-1]


def log_det_rate(jacobians):
    """ (1/T) sum_t log|det J_t|, the rate of change of full volume elements. """
    jacobians = list(jacobians)
    return sum(np.linalg.slogdet(J)[1] for J in jacobians) / len(jacobians)


def trajectory_jacobians(cells, x_seq, h0=None):
    """
    The stacked Jacobians along the trajectory driven by x_seq, each
    evaluated at the pre-update state as in the estimator.
    """
    cells = as_stack(cells)
    if h0 is None:
        h0 = NetState([cell.new_state() for cell in cells])
    state = as_net_state(cells, h0)
    out = []
    for x in np.asarray(x_seq, dtype=np.float64):
        state, J = stacked_linearize(cells, state, x)
        out.append(J)
    return out


def max_scaled_error(a, b, floor=1e-3):
    """
    max |a - b| divided by the scale of the reference, the largest
    |b| but at least floor. An entry of b much smaller than
    the scale is held to an absolute bound, not a relative one.
    """
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def _check_jacobians(arch, layers, rng):
    tol = CHECK_TOLERANCES['jacobian']
    worst = 0.0
    for trial in range(5):
        sub = rng.child(trial)
        cells = gen_cells(arch, 4, 3, sub, layers=layers, init='uniform:0.5',
                          input_init='uniform:0.5', bias_init='uniform:0.5')
        state = gen_initial_states(cells, 1.0, 1, sub.child(1))[0]
        for layer in state:
            if layer.c is not None:
                layer.c[:] = init_gaussian(len(layer.c), None, 1.0, sub.child(2))
        x = init_gaussian(3, None, 1.0, sub.child(3))
        if layers == 1:
            worst = max(worst,
                        max_scaled_error(jacobian_state(cells[0], state[0], x),
                                           finite_difference_jacobian(cells, state, x)),
                        max_scaled_error(jacobian_input(cells[0], state[0], x),
                                           finite_difference_jacobian(cells, state, x, wrt='input')))
        else:
            worst = max(worst, max_scaled_error(stacked_linearize(cells, state, x)[1],
                                                  finite_difference_jacobian(cells, state, x)))
    return worst < tol, 'max error / reference scale %.2e (tol %.0e)' % (worst, tol)


def _telescoping_setup(rng):
    cells = gen_cells('vanilla', 6, 6, rng, init='orthogonal:0.81')
    x_seq = gen_inputs(50, 6, 0.01, 1, rng)[0]
    return cells, x_seq


def _check_telescoping(rng):
    tol = CHECK_TOLERANCES['telescoping']
    cells, x_seq = _telescoping_setup(rng)
    T = len(x_seq)
    gammas = [run_sequence(cells, EstimatorConfig(T=T, t_on=t_on), x_seq)[0] * T
              for t_on in (1, 5, 10, 25, 50)]
    ref = product_qr_exponents(trajectory_jacobians(cells, x_seq)) * T
    worst = max(np.max(np.abs(g - ref)) for g in gammas)
    return worst < tol, 'max gamma deviation %.2e (tol %.0e)' % (worst, tol)


def _check_volume(rng):
    tol = CHECK_TOLERANCES['volume']
    cells, x_seq = _telescoping_setup(rng)
    lam = run_sequence(cells, EstimatorConfig(T=len(x_seq)), x_seq)[0]
    err = abs(np.sum(lam) - log_det_rate(trajectory_jacobians(cells, x_seq)))
    return err < tol, 'volume rate error %.2e (tol %.0e)' % (err, tol)


def _check_linear(rng):
    tol = CHECK_TOLERANCES['linear']
    worst = 0.0
    for i, g in enumerate((0.5, 1.0, 2.0)):
        V = init_orthogonal(5, g, rng.child(i))
        cell = VanillaCell(V, np.eye(5), nonlinearity='identity')
        x_seq = gen_inputs(40, 5, 1.0, 1, rng.child(i))[0]
        lam = run_sequence(cell, EstimatorConfig(T=40), x_seq)[0]
        worst = max(worst, np.max(np.abs(lam - np.log(g))))
    return worst < tol, 'max deviation from ln g %.2e (tol %.0e)' % (worst, tol)


def _check_orthonormality(rng):
    tol = CHECK_TOLERANCES['orthonormality']
    cells = gen_cells('lstm', 8, 8, rng, init='uniform:0.5', input_init='uniform:0.5')
    x_seq = gen_inputs(30, 8, 1.0, 1, rng)[0]
    state = gen_initial_states(cells, 1.0, 1, rng)[0]
    basis = TangentBasis.identity(8)
    worst = 0.0
    for t, x in enumerate(x_seq, 1):
        state, basis = propagate_step(cells, state, basis, x, t=t)
        worst = max(worst, np.max(np.abs(basis.Q.T @ basis.Q - np.eye(8))))
    return worst < tol, 'max |Q^T Q - I| %.2e (tol %.0e)' % (worst, tol)


def run_checks(seed=12345):
    """
    Runs the built-in check suite. Returns a list of (name, passed,
    detail) tuples.
    """
    rng = RngSpec(seed)
    checks = [
        ('jacobian_vanilla', lambda: _check_jacobians('vanilla', 1, rng.child(0))),
        ('jacobian_lstm', lambda: _check_jacobians('lstm', 1, rng.child(1))),
        ('jacobian_gru', lambda: _check_jacobians('gru', 1, rng.child(2))),
        ('jacobian_stacked_lstm', lambda: _check_jacobians('lstm', 2, rng.child(3))),
        ('telescoping_qr', lambda: _check_telescoping(rng.child(4))),
        ('volume_identity', lambda: _check_volume(rng.child(4))),
        ('linear_spectrum', lambda: _check_linear(rng.child(5))),
        ('orthonormality', lambda: _check_orthonormality(rng.child(6))),
    ]
    results = []
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as e:
            passed, detail = False, '%s: %s' % (e.__class__.__name__, e)
        logger.info('check %s: %s, %s' % (name, 'pass' if passed else 'FAIL', detail))
        results.append((name, bool(passed), detail))
    return results
