"""
Command line front end: simulate random networks, compute the spectrum
of given weights, summarize spectrum files and run the self checks.
The console script apps/lyapunovSpectrum.py calls main().
"""

import sys
import json
import logging
import argparse

from . import LyapException, ConfigException, DimensionException
from .core.cells import ARCHS, VanillaCell
from .core.estimator import EstimatorConfig, run_batch
from .utils.ensembles import (RngSpec, parse_init, gen_cells, gen_batch, gen_inputs,
                              gen_initial_states)
from .utils.features import MARGINAL_TOL, summarize, rms_distance, mean_difference
from .utils.io_utils import (SPECTRUM_FORMATS, load_weights, load_sequences,
                             save_spectrum, load_spectrum)
from .utils.oracle import run_checks

__all__ = ['main', 'build_parser', 'cmd_simulate', 'cmd_compute', 'cmd_features', 'cmd_check']

logger = logging.getLogger(__name__)

PROG = 'lyapunovSpectrum'


def _init_spec(spec):
    try:
        parse_init(spec)
    except ConfigException as e:
        raise argparse.ArgumentTypeError(str(e))
    return spec


def _non_negative(val):
    val = float(val)
    if val < 0:
        raise argparse.ArgumentTypeError('should be non-negative, got %s' % val)
    return val


def _seed(val):
    val = int(val)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError('should be a 64-bit unsigned integer, got %s' % val)
    return val


def build_parser():
    """ The argument parser with its four subcommands. """
    fmt = argparse.ArgumentDefaultsHelpFormatter

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='Log progress to stderr, -vv for per-sequence output.')

    summary = argparse.ArgumentParser(add_help=False)
    summary.add_argument('--marginal-tol', type=_non_negative, dest='marginal_tol', default=MARGINAL_TOL,
                         help='Half width of the band around zero where lambda_max counts as marginal.')
    summary.add_argument('--json', action='store_true',
                         help='Print the features as JSON.')

    estimator = argparse.ArgumentParser(add_help=False)
    estimator.add_argument('--warmup', type=int, dest='warmup', default=0,
                           help='Discarded relaxation steps before accumulation.')
    estimator.add_argument('--t-on', type=int, dest='t_on', default=1,
                           help='Orthonormalization interval in steps.')
    estimator.add_argument('--k', type=int, dest='k', default=0,
                           help='Number of exponents to track, 0 for all.')
    estimator.add_argument('--seed', type=_seed, dest='seed', default=0,
                           help='Master seed of all generated weights, inputs and states.')
    estimator.add_argument('--workers', type=int, dest='workers', default=1,
                           help='Threads running sequences concurrently. Does not change the output.')
    estimator.add_argument('--degenerate-policy', dest='degenerate_policy', default='clamp',
                           choices=['error', 'clamp'],
                           help='What to do when a tangent vector is annihilated, as happens in float64 '
                                'with saturated tanh units. clamp records a log expansion of -745, '
                                'error stops the run.')
    estimator.add_argument('--qr-sign', dest='qr_sign', default='positive', choices=['positive', 'abs'],
                           help='Sign convention of the QR decompositions.')
    estimator.add_argument('--warmup-orthonormalize', dest='warmup_orthonormalize', default='interval',
                           choices=['interval', 'final'],
                           help='Orthonormalize every t_on warmup steps, or only at the end of warmup.')
    estimator.add_argument('--sigma-x', type=_non_negative, dest='sigma_x', default=0.6,
                           help='Variance of the generated Gaussian inputs.')
    estimator.add_argument('--out', type=str, dest='out', default=None,
                           help='Spectrum file to write. Nothing is written if omitted.')
    estimator.add_argument('--format', dest='format', default='structured', choices=SPECTRUM_FORMATS,
                           help='Format of the spectrum file.')

    parser = argparse.ArgumentParser(
        prog=PROG,
        description='Stochastic Lyapunov spectra of input-driven vanilla, LSTM and GRU networks.',
        formatter_class=fmt)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('simulate', parents=[common, estimator, summary], formatter_class=fmt,
                       help='Draw a random network and inputs, and compute its spectrum.',
                       description='Draws a random network and an ensemble of inputs and initial '
                                   'states from the seed, computes the spectrum and prints its features.')
    p.add_argument('--arch', choices=sorted(ARCHS), default='vanilla',
                   help='Cell architecture.')
    p.add_argument('--n', type=int, dest='n', default=128,
                   help='Hidden units per layer.')
    p.add_argument('--n-in', type=int, dest='n_in', default=None,
                   help='Input dimension, defaults to --n.')
    p.add_argument('--layers', type=int, dest='layers', default=1,
                   help='Number of stacked layers.')
    p.add_argument('--init', type=_init_spec, dest='init', default='orthogonal:1',
                   help='Recurrent matrices, orthogonal:g2, uniform:p or gaussian:s2.')
    p.add_argument('--input-init', type=_init_spec, dest='input_init', default=None,
                   help='Input matrices. Defaults to identity for square vanilla cells, to uniform:1/sqrt(n_in) '
                        'for rectangular inputs when --init needs a square matrix, and to --init otherwise.')
    p.add_argument('--bias-init', type=_init_spec, dest='bias_init', default='zeros',
                   help='Biases, zeros, uniform:p or gaussian:s2.')
    p.add_argument('--nonlinearity', choices=VanillaCell.nonlinearities, default='tanh',
                   help='Vanilla cells only.')
    p.add_argument('--sigma-h0', type=_non_negative, dest='sigma_h0', default=1.0,
                   help='Variance of the Gaussian initial hidden states.')
    p.add_argument('--t', type=int, dest='t', default=100,
                   help='Accumulated steps per sequence.')
    p.add_argument('--batch', type=int, dest='batch', default=10,
                   help='Number of input sequences.')
    p.set_defaults(func=cmd_simulate, parser=p)

    p = sub.add_parser('compute', parents=[common, estimator, summary], formatter_class=fmt,
                       help='Compute the spectrum of a weights file.',
                       description='Computes the spectrum of the network in a weights file, driven by '
                                   'the sequences of an input file or by generated Gaussian inputs.')
    p.add_argument('--weights', type=str, dest='weights', required=True,
                   help='Weights file.')
    p.add_argument('--inputs', type=str, dest='inputs', default=None,
                   help='Input sequence file. Gaussian inputs are generated if omitted.')
    p.add_argument('--sigma-h0', type=_non_negative, dest='sigma_h0', default=0.0,
                   help='Variance of the Gaussian initial hidden states.')
    p.add_argument('--t', type=int, dest='t', default=None,
                   help='Accumulated steps per sequence, defaults to what the input file holds after '
                        'warmup, or to 100 for generated inputs.')
    p.add_argument('--batch', type=int, dest='batch', default=None,
                   help='Number of input sequences, defaults to all in the input file, or to 10.')
    p.set_defaults(func=cmd_compute, parser=p)

    p = sub.add_parser('features', parents=[common, summary], formatter_class=fmt,
                       help='Summarize one spectrum file, or compare two.',
                       description='Prints lambda_max, the mean and variance of the exponents and the '
                                   'regime. With two spectra, also their rms distance and mean difference.')
    p.add_argument('--spectrum', type=str, dest='spectrum', action='append', required=True,
                   help='Spectrum file, give twice to compare.')
    p.set_defaults(func=cmd_features, parser=p)

    p = sub.add_parser('check', parents=[common], formatter_class=fmt,
                       help='Run the built-in numerical checks.',
                       description='Checks the analytical Jacobians against finite differences and the '
                                   'estimator against explicit products and known linear spectra.')
    p.add_argument('--seed', type=_seed, dest='seed', default=12345,
                   help='Seed of the randomly drawn test systems.')
    p.set_defaults(func=cmd_check, parser=p)

    return parser


def _config(args, T, batch_size, n_total):
    """ Builds the EstimatorConfig, reporting bad combinations as usage errors. """
    try:
        config = EstimatorConfig(T=T, warmup_steps=args.warmup, t_on=args.t_on, batch_size=batch_size,
                                 seed=args.seed, k_exponents=args.k, workers=args.workers,
                                 degenerate_policy=args.degenerate_policy, qr_sign=args.qr_sign,
                                 warmup_orthonormalize=args.warmup_orthonormalize)
        config.n_exponents(n_total)
    except ConfigException as e:
        args.parser.error(str(e))
    if args.format == 'hdf5' and not args.out:
        args.parser.error('--format hdf5 needs --out')
    return config


def _print_features(features, args, extra=None):
    dct = features.as_dict()
    dct.update(extra or {})
    if args.json:
        print(json.dumps(dct, indent=2))
    else:
        for key, val in dct.items():
            print('%-16s %s' % (key, val if isinstance(val, str) else '%.6g' % val))


def _finish(result, args):
    if args.out:
        save_spectrum(result, args.out, format=args.format)
    _print_features(result.features(args.marginal_tol), args)
    return 0


def cmd_simulate(args):
    """ Random network, generated inputs and initial states, all from --seed. """
    n_in = args.n if args.n_in is None else args.n_in
    if args.n < 1 or n_in < 1 or args.layers < 1:
        args.parser.error('--n, --n-in and --layers should be positive')
    config = _config(args, args.t, args.batch, args.n * args.layers)
    try:
        cells = gen_cells(args.arch, args.n, n_in, RngSpec(args.seed), layers=args.layers,
                          init=args.init, input_init=args.input_init, bias_init=args.bias_init,
                          nonlinearity=args.nonlinearity)
    except ConfigException as e:
        args.parser.error(str(e))
    inputs, states = gen_batch(cells, config, args.sigma_x, args.sigma_h0)
    return _finish(run_batch(cells, config, inputs, states), args)


def cmd_compute(args):
    """ Loaded weights driven by loaded or generated inputs. """
    cells = load_weights(args.weights)
    n_in = cells[0].n_input
    n_total = sum(cell.n_hidden for cell in cells)
    if args.inputs:
        inputs = load_sequences(args.inputs)
        if inputs.shape[2] != n_in:
            raise DimensionException('%s holds %u-dimensional inputs but the network expects n_input=%u'
                                     % (args.inputs, inputs.shape[2], n_in))
        T = inputs.shape[1] - args.warmup if args.t is None else args.t
        batch = inputs.shape[0] if args.batch is None else args.batch
        config = _config(args, T, batch, n_total)
    else:
        T = 100 if args.t is None else args.t
        batch = 10 if args.batch is None else args.batch
        config = _config(args, T, batch, n_total)
        inputs = gen_inputs(config.warmup_steps + config.T, n_in, args.sigma_x,
                            config.batch_size, RngSpec(config.seed))
    states = None
    if args.sigma_h0 > 0:
        states = gen_initial_states(cells, args.sigma_h0, config.batch_size, RngSpec(config.seed))
    return _finish(run_batch(cells, config, inputs, states), args)


def cmd_features(args):
    """ Features of one spectrum file, plus distances when given two. """
    if len(args.spectrum) > 2:
        args.parser.error('give --spectrum once or twice')
    spectra = [load_spectrum(path) for path in args.spectrum]
    extra = None
    if len(spectra) == 2:
        a, b = spectra[0].mean, spectra[1].mean
        extra = {'rms_distance': rms_distance(a, b), 'mean_difference': mean_difference(a, b)}
    _print_features(summarize(spectra[0].mean, args.marginal_tol), args, extra)
    return 0


def cmd_check(args):
    """ Runs the check suite and prints a pass/fail table. Exit status 0 iff all pass. """
    results = run_checks(seed=args.seed)
    width = max(len(name) for name, _, _ in results)
    print('%-*s  %-6s %s' % (width, 'check', 'result', 'detail'))
    for name, passed, detail in results:
        print('%-*s  %-6s %s' % (width, name, 'pass' if passed else 'FAIL', detail))
    n_failed = sum(not passed for _, passed, _ in results)
    print('%u of %u checks passed' % (len(results) - n_failed, len(results)))
    return 0 if n_failed == 0 else 1


def main(argv=None):
    """
    Parses argv (sys.argv[1:] by default) and runs the subcommand.
    Returns the exit status, 1 for failed computations and file errors.
    Usage errors exit with status 2 through argparse.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s')
    logging.getLogger('lyaputils').setLevel(level)
    try:
        return args.func(args)
    except (LyapException, OSError) as e:
        logger.debug('command failed', exc_info=True)
        print('%s: error: %s' % (PROG, e), file=sys.stderr)
        return 1
