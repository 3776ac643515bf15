"""Closed-form invariant suite behind the `self-check` subcommand.

Each check exercises a piece of the toolkit against an analytic answer and
is cheap enough that the whole suite stays well under a minute.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from . import gaussian_limits as gl
from .branching import ModelParams, SigmaProfile, evolve, offspring_count
from .occupation import ScalingRegime, fluctuation_path
from .stable_motion import density, density_at_zero, density_table, sample_increment
from .testfuncs import TestFunction


def _ks_against_cdf(samples, cdf_vals_sorted):
    n = len(samples)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return max(np.max(np.abs(ecdf_hi - cdf_vals_sorted)),
               np.max(np.abs(cdf_vals_sorted - ecdf_lo)))


def run_self_check(verbose=True) -> bool:
    checks = []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok)))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))

    # kernel closed forms
    k = gl.CovKernel("rl", 5.0 / 6.0)
    check("rl cov(1,1) = 1/(2H)", abs(gl.cov(k, 1.0, 1.0) - 0.6) < 1e-12)
    k = gl.CovKernel("fbm", 0.75)
    check("fbm cov(1,2) closed form",
          abs(gl.cov(k, 1.0, 2.0) - 0.5 * (1.0 + 2.0**1.5 - 1.0)) < 1e-12)
    k = gl.CovKernel("subfbm", 0.75)
    check("subfbm cov(1,1) closed form",
          abs(gl.cov(k, 1.0, 1.0) - (2.0 - 2.0**0.5)) < 1e-12)
    collapse = all(
        gl.cov(gl.CovKernel(f, 0.5), 1.0, 3.0) == 1.0 for f in gl.FAMILIES
    )
    check("all families collapse to min(s,t) at H=1/2", collapse)

    # limit constants
    lc = gl.limit_constants(1.5, 1.0, 1.0)
    check("H(alpha=1.5) = 5/6", abs(lc.H - 5.0 / 6.0) < 1e-14)
    check("K(1.5,1,1) ~ 1.219", abs(lc.amplitude - 1.2191344748666282) < 1e-12)
    lc1 = gl.limit_constants(1.0, 1.0, 1.0)
    check("C(1,1,1) = 2/pi", abs(lc1.amplitude - 2.0 / math.pi) < 1e-15)

    # stable density closed forms and quadrature consistency
    check("cauchy p_1(0) = 1/pi", abs(density(1.0, 1.0, 0.0) - 1.0 / math.pi) < 1e-14)
    check("gauss p_1(0) = 1/(2 sqrt(pi))",
          abs(density(2.0, 1.0, 0.0) - 0.5 / math.sqrt(math.pi)) < 1e-14)
    ref = quad(lambda z: math.exp(-(z**1.5)), 0.0, 60.0)[0] / math.pi
    check("alpha=1.5 p_1(0) vs direct quadrature",
          abs(density_at_zero(1.5) - ref) < 1e-10,
          f"{density_at_zero(1.5):.9f} vs {ref:.9f}")

    # sampler vs numeric CDF (modest n keeps this fast)
    rng = np.random.default_rng(20260810)
    x = np.sort(sample_increment(1.5, 1.0, rng, size=20000))
    stat = _ks_against_cdf(x, density_table(1.5).cdf1(x))
    check("CMS sampler vs numeric CDF (alpha=1.5, n=2e4)",
          stat < 1.6276 / math.sqrt(len(x)), f"KS={stat:.4f}")

    # offspring law
    rng = np.random.default_rng(7)
    draws = np.array([offspring_count(0.25, rng) for _ in range(20000)])
    freqs = np.array([(draws == i).mean() for i in (0, 1, 2)])
    band = 3.0 * math.sqrt(0.25 * 0.75 / len(draws))
    check("offspring frequencies at sigma=0.25",
          abs(freqs[0] - 0.25) < band and abs(freqs[2] - 0.25) < band,
          f"freqs={freqs.round(4)}")

    # moving-average sampler at H=1/2 is a Brownian partial sum
    rng = np.random.default_rng(5)
    grid = np.arange(1, 9) / 8.0
    paths = gl.rl_moving_average_paths(0.5, grid, rng, n=1)
    rng = np.random.default_rng(5)
    z = rng.standard_normal((1, 8))
    check("moving average at H=1/2 = partial sums",
          np.allclose(paths, np.cumsum(z, axis=1) / math.sqrt(8.0), atol=1e-14))

    # independent increments of BM
    check("bm increment covariance vanishes",
          gl.increment_cov(gl.CovKernel("bm"), 0.0, 1.0, 2.0, 3.0, 10.0) == 0.0)

    # deterministic pipeline pieces
    phi = TestFunction.unit_bump()
    params = ModelParams(1.5, 0.0, SigmaProfile.zero(), 4.0, 10.0, 0.5)
    from .branching import OccupationRecord

    stub = OccupationRecord(0.5, np.full(9, phi.integral), np.ones(9, dtype=np.int64))
    path = fluctuation_path(stub, params, phi, ScalingRegime.for_alpha(1.5), n_t=4)
    check("centered stub gives the zero path", np.all(path.values == 0.0))

    # quick evolution smoke test (criticality of the mean at small scale)
    rng = np.random.default_rng(11)
    vals = []
    for _ in range(200):
        rec = evolve(ModelParams(1.5, 1.0, SigmaProfile.interval(0.5, -1.0, 1.0),
                                 4.0, 25.0, 0.5), phi, rng)
        vals.append(rec.values[-1])
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    check("mean occupation functional compatible with <lambda, phi>",
          abs(mean - phi.integral) < 4.0 * se,
          f"mean={mean:.3f} target={phi.integral:.3f} se={se:.3f}")

    ok = all(flag for _, flag in checks)
    if verbose:
        n_pass = sum(flag for _, flag in checks)
        print(f"self-check: {n_pass}/{len(checks)} passed")
    return ok
