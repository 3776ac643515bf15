import numpy as np
import pytest

import occufluct as oc


@pytest.fixture
def unit_bump():
    return oc.TestFunction.unit_bump()


@pytest.fixture
def interval_sigma():
    return oc.SigmaProfile.interval(0.5, -1.0, 1.0)


def ks_against_cdf(sorted_samples, cdf_sorted):
    """Two-sided KS statistic of sorted samples against CDF values."""
    n = len(sorted_samples)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return max(float(np.max(np.abs(hi - cdf_sorted))),
               float(np.max(np.abs(cdf_sorted - lo))))


def ks_critical(n, level=0.01):
    """Asymptotic Kolmogorov critical value (1.6276/sqrt(n) at the 1% level)."""
    import math

    return math.sqrt(-math.log(level / 2.0) / 2.0) / math.sqrt(n)
