"""
Summary features of Lyapunov spectra and distances between spectra,
used as readouts of network stability.
"""

import numpy as np

from .. import DimensionException

__all__ = ['MARGINAL_TOL', 'REGIMES', 'SpectrumFeatures', 'summarize',
           'rms_distance', 'mean_difference']

# half width (in 1/steps) of the band around zero classified as marginal
MARGINAL_TOL = 0.05

REGIMES = ('stable', 'marginal', 'chaotic')


class SpectrumFeatures(object):

    def __init__(self, lambda_max, lambda_mean, lambda_variance, regime):
        self.lambda_max = float(lambda_max)
        self.lambda_mean = float(lambda_mean)
        self.lambda_variance = float(lambda_variance)
        assert regime in REGIMES
        self.regime = regime

    def as_dict(self):
        return {'lambda_max': self.lambda_max,
                'lambda_mean': self.lambda_mean,
                'lambda_variance': self.lambda_variance,
                'regime': self.regime}

    def __repr__(self):
        return ('SpectrumFeatures(lambda_max=%.6g, lambda_mean=%.6g, lambda_variance=%.6g, regime=%s)'
                % (self.lambda_max, self.lambda_mean, self.lambda_variance, self.regime))


def _spectrum(a, name='spectrum'):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if len(a) == 0:
        raise DimensionException('%s is empty' % name)
    return a


def summarize(spectrum, marginal_tol=MARGINAL_TOL):
    """
    Maximum, mean and population variance of a spectrum, and its
    stability regime by the sign of the maximum: chaotic above
    marginal_tol, stable below -marginal_tol, marginal in between. The
    maximum is taken over all entries since finite-time estimates need
    not come out sorted.
    """
    lam = _spectrum(spectrum)
    if marginal_tol < 0:
        raise ValueError('marginal_tol should be non-negative, got %s' % marginal_tol)
    lmax = np.max(lam)
    if lmax > marginal_tol:
        regime = 'chaotic'
    elif lmax < -marginal_tol:
        regime = 'stable'
    else:
        regime = 'marginal'
    return SpectrumFeatures(lmax, np.mean(lam), np.var(lam), regime)


def _pair(a, b):
    a, b = _spectrum(a, 'first spectrum'), _spectrum(b, 'second spectrum')
    if len(a) != len(b):
        raise DimensionException('spectra have different lengths, %u and %u' % (len(a), len(b)))
    return a, b


def rms_distance(a, b):
    """ Root-mean-square difference over exponent index, sqrt(mean((a - b)^2)). """
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b)**2)))


def mean_difference(a, b):
    """ Difference of the mean exponents, mean(a) - mean(b). """
    a, b = _pair(a, b)
    return float(np.mean(a) - np.mean(b))
