import math

import numpy as np
import pytest
from scipy.stats import chisquare, ks_2samp, kstest, poisson

import occufluct as oc
from occufluct.branching import HAVE_EXT, _draw_initial

from conftest import ks_critical


class TestSigmaProfile:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            oc.SigmaProfile.interval(0.6, -1, 1)
        with pytest.raises(ValueError):
            oc.SigmaProfile.interval(-0.1, -1, 1)
        with pytest.raises(ValueError):
            oc.SigmaProfile.interval(0.5, 1, -1)
        with pytest.raises(ValueError):
            oc.SigmaProfile.gaussian(0.3, 0.0, -1.0)
        with pytest.raises(ValueError):
            oc.SigmaProfile("triangle", 0.1)

    def test_analytic_mass(self):
        assert oc.SigmaProfile.zero().D == 0.0
        assert oc.SigmaProfile.interval(0.5, -1, 1).D == 1.0
        g = oc.SigmaProfile.gaussian(0.25, 0.5, 2.0)
        assert abs(g.D - 0.25 * 2.0 * math.sqrt(2 * math.pi)) < 1e-14

    def test_values(self):
        s = oc.SigmaProfile.interval(0.5, -1, 1)
        assert np.array_equal(s.value([-2.0, -1.0, 0.0, 1.0, 2.0]),
                              [0.0, 0.5, 0.5, 0.5, 0.0])
        g = oc.SigmaProfile.gaussian(0.4, 1.0, 0.5)
        assert abs(g.value(1.0) - 0.4) < 1e-15

    def test_roundtrip(self):
        for s in (oc.SigmaProfile.zero(), oc.SigmaProfile.interval(0.3, -2, 1),
                  oc.SigmaProfile.gaussian(0.2, 0.5, 1.5)):
            assert oc.SigmaProfile.from_dict(s.to_dict()) == s


class TestModelParams:
    def test_validation(self, interval_sigma):
        oc.ModelParams(1.5, 1.0, interval_sigma, 10.0, 50.0, 0.25)
        with pytest.raises(ValueError):
            oc.ModelParams(1.5, 1.0, interval_sigma, 10.0, 50.0, 0.3)  # T/delta not integer
        with pytest.raises(ValueError):
            oc.ModelParams(1.5, -1.0, interval_sigma, 10.0, 50.0, 0.25)
        with pytest.raises(ValueError):
            oc.ModelParams(2.5, 1.0, interval_sigma, 10.0, 50.0, 0.25)

    def test_default_window(self, unit_bump):
        L = oc.default_window(unit_bump, 1.5, 20.0)
        assert L > 10.0 * 20.0 ** (2.0 / 3.0)


class TestInitPopulation:
    def test_poisson_counts(self):
        rng = np.random.default_rng(101)
        counts = np.array([len(oc.init_population(10.0, 1.0, rng)) for _ in range(10_000)])
        # chi-square GOF against Poisson(20), tails pooled
        edges = np.arange(8, 33)
        observed = np.array([(counts == k).sum() for k in edges])
        observed = np.concatenate([[np.sum(counts < 8)], observed, [np.sum(counts > 32)]])
        probs = poisson.pmf(edges, 20.0)
        probs = np.concatenate([[poisson.cdf(7, 20.0)], probs, [1 - poisson.cdf(32, 20.0)]])
        stat = chisquare(observed, probs * len(counts))
        assert stat.pvalue > 0.01
        assert abs(counts.mean() - 20.0) < 3.0 * math.sqrt(20.0 / len(counts))

    def test_uniform_positions(self):
        rng = np.random.default_rng(102)
        xs = np.concatenate([
            [p.position for p in oc.init_population(10.0, 1.0, rng)] for _ in range(500)
        ])
        assert kstest(xs, "uniform", args=(-10.0, 20.0)).pvalue > 0.01

    def test_gamma_zero_clocks(self):
        rng = np.random.default_rng(103)
        pop = oc.init_population(5.0, 0.0, rng)
        assert all(math.isinf(p.next_branch_time) for p in pop)

    def test_clock_rate(self):
        rng = np.random.default_rng(104)
        clocks = np.array([p.next_branch_time
                           for _ in range(300)
                           for p in oc.init_population(10.0, 2.0, rng)])
        assert kstest(clocks, "expon", args=(0.0, 0.5)).pvalue > 0.01


class TestOffspring:
    def test_domain(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            oc.offspring_count(0.6, rng)
        with pytest.raises(ValueError):
            oc.offspring_count(-0.1, rng)

    def test_sigma_zero_always_one(self):
        rng = np.random.default_rng(1)
        assert all(oc.offspring_count(0.0, rng) == 1 for _ in range(1000))

    def test_sigma_half_binary(self):
        rng = np.random.default_rng(2)
        draws = np.array([oc.offspring_count(0.5, rng) for _ in range(100_000)])
        assert not np.any(draws == 1)
        band = 3.0 * math.sqrt(0.25 / len(draws))
        assert abs((draws == 0).mean() - 0.5) < band
        assert abs((draws == 2).mean() - 0.5) < band

    def test_sigma_quarter_frequencies(self):
        rng = np.random.default_rng(3)
        draws = np.array([oc.offspring_count(0.25, rng) for _ in range(100_000)])
        n = len(draws)
        for k, p in ((0, 0.25), (1, 0.5), (2, 0.25)):
            band = 3.0 * math.sqrt(p * (1 - p) / n)
            assert abs((draws == k).mean() - p) < band
        assert abs(draws.mean() - 1.0) < 3.0 * math.sqrt(2 * 0.25 / n)


def _collect_finals(params, phi, n_reps, seed, **kw):
    vals = np.empty((n_reps, params.n_steps + 1))
    for rep in range(n_reps):
        vals[rep] = oc.evolve(params, phi, oc.rep_rng(seed, rep), **kw).values
    return vals


class TestEvolve:
    def test_mean_measure_no_branching(self, unit_bump):
        # gamma=0, alpha=2: E v_k = integral(phi) at every grid time
        params = oc.ModelParams(2.0, 0.0, oc.SigmaProfile.zero(), 4.0,
                                oc.default_window(unit_bump, 2.0, 4.0), 0.5)
        vals = _collect_finals(params, unit_bump, 2000, 777)
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
        assert np.all(np.abs(mean - unit_bump.integral) <= 3.0 * se)

    def test_sigma_zero_matches_gamma_zero_in_law(self, unit_bump):
        # no-op branches must not change the law of the record
        zero = oc.SigmaProfile.zero()
        p_branchy = oc.ModelParams(1.5, 2.0, zero, 4.0, 30.0, 0.5)
        p_off = oc.ModelParams(1.5, 0.0, zero, 4.0, 30.0, 0.5)
        with_noops = _collect_finals(p_branchy, unit_bump, 800, 5,
                                     short_circuit_noop=False)[:, -1]
        without = _collect_finals(p_off, unit_bump, 800, 5)[:, -1]
        assert ks_2samp(with_noops, without).pvalue > 0.01

    def test_noop_short_circuit_same_law(self, unit_bump):
        zero = oc.SigmaProfile.zero()
        params = oc.ModelParams(1.5, 2.0, zero, 4.0, 30.0, 0.5)
        on = _collect_finals(params, unit_bump, 800, 6, short_circuit_noop=True)[:, -1]
        off = _collect_finals(params, unit_bump, 800, 6, short_circuit_noop=False)[:, -1]
        assert ks_2samp(on, off).pvalue > 0.01

    def test_determinism(self, unit_bump, interval_sigma):
        params = oc.ModelParams(1.5, 1.0, interval_sigma, 4.0, 25.0, 0.25)
        a = oc.evolve(params, unit_bump, oc.rep_rng(9, 4))
        b = oc.evolve(params, unit_bump, oc.rep_rng(9, 4))
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.counts, b.counts)

    @pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel unavailable")
    def test_lanes_bit_identical(self, unit_bump, interval_sigma):
        params = oc.ModelParams(1.5, 1.0, interval_sigma, 6.0, 25.0, 0.25)
        for rep in range(8):
            a = oc.evolve(params, unit_bump, oc.rep_rng(31, rep), impl="cython")
            b = oc.evolve(params, unit_bump, oc.rep_rng(31, rep), impl="python")
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.counts, b.counts)

    @pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel unavailable")
    def test_lanes_bit_identical_alpha_one_and_gaussian_sigma(self):
        phi = oc.TestFunction.from_tuples([(1.0, 0.0, 1.0), (0.4, 1.0, 0.5)])
        sig = oc.SigmaProfile.gaussian(0.5, 0.0, 1.0)
        params = oc.ModelParams(1.0, 1.5, sig, 4.0, 50.0, 0.5)
        for rep in range(5):
            a = oc.evolve(params, phi, oc.rep_rng(77, rep), impl="cython")
            b = oc.evolve(params, phi, oc.rep_rng(77, rep), impl="python")
            assert np.array_equal(a.values, b.values)

    def test_population_cap_triggers(self, unit_bump, interval_sigma):
        params = oc.ModelParams(1.5, 1.0, interval_sigma, 4.0, 25.0, 0.25)
        with pytest.raises(oc.PopulationCapError):
            oc.evolve(params, unit_bump, oc.rep_rng(1, 1), cap=5)

    def test_criticality_with_branching(self, unit_bump, interval_sigma):
        params = oc.ModelParams(1.5, 1.0, interval_sigma, 8.0,
                                oc.default_window(unit_bump, 1.5, 8.0), 0.5)
        vals = _collect_finals(params, unit_bump, 2000, 12)
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
        assert np.all(np.abs(mean - unit_bump.integral) <= 3.0 * se)

    def test_cov_matches_moment_oracle(self, unit_bump, interval_sigma):
        # independent cross-validation of the simulator against the
        # exact covariance of (<N(10), phi>, <N(15), phi>)
        T = 20.0
        params = oc.ModelParams(1.5, 1.0, interval_sigma, T,
                                oc.default_window(unit_bump, 1.5, T), 0.25)
        n = 5000
        vals = np.empty((n, 2))
        j10, j15 = int(10.0 / 0.25), int(15.0 / 0.25)
        for rep in range(n):
            rec = oc.evolve(params, unit_bump, oc.rep_rng(2026, rep))
            vals[rep] = rec.values[j10], rec.values[j15]
        mc = float(np.cov(vals[:, 0], vals[:, 1], ddof=1)[0, 1])
        rng = np.random.default_rng(0)
        boots = np.array([
            float(np.cov(vals[idx, 0], vals[idx, 1], ddof=1)[0, 1])
            for idx in rng.integers(0, n, (400, n))
        ])
        oracle = oc.cov_N(unit_bump, params, 10.0, 15.0)
        assert abs(mc - oracle) <= 3.0 * boots.std(ddof=1)

    def test_window_doubling_bias(self, unit_bump, interval_sigma):
        # truncation-bias regression: doubling L moves the covariance by
        # less than one bootstrap SE
        T = 8.0
        n = 4000
        j, k = int(4.0 / 0.5), int(8.0 / 0.5)
        covs, ses = [], []
        for scale in (1.0, 2.0):
            L = scale * oc.default_window(unit_bump, 1.5, T)
            params = oc.ModelParams(1.5, 1.0, interval_sigma, T, L, 0.5)
            vals = np.empty((n, 2))
            for rep in range(n):
                rec = oc.evolve(params, unit_bump, oc.rep_rng(int(1000 * scale), rep))
                vals[rep] = rec.values[j], rec.values[k]
            covs.append(float(np.cov(vals[:, 0], vals[:, 1], ddof=1)[0, 1]))
            rng = np.random.default_rng(1)
            boots = np.array([
                float(np.cov(vals[idx, 0], vals[idx, 1], ddof=1)[0, 1])
                for idx in rng.integers(0, n, (300, n))
            ])
            ses.append(boots.std(ddof=1))
        assert abs(covs[0] - covs[1]) < max(ses)

    def test_subsample(self, unit_bump, interval_sigma):
        params = oc.ModelParams(1.5, 1.0, interval_sigma, 4.0, 25.0, 0.25)
        rec = oc.evolve(params, unit_bump, oc.rep_rng(3, 3))
        half = rec.subsample(2)
        assert half.delta == 0.5
        assert np.array_equal(half.values, rec.values[::2])
        with pytest.raises(ValueError):
            rec.subsample(3)

    def test_L_smaller_than_support_rejected(self, unit_bump, interval_sigma):
        params = oc.ModelParams(1.5, 1.0, interval_sigma, 4.0, 2.0, 0.25)
        with pytest.raises(ValueError):
            oc.evolve(params, unit_bump, oc.rep_rng(0, 0))


class TestConstructionInvariants:
    def test_sigma_outside_support_is_noop(self):
        # particles away from the sigma support never die or split: the
        # offspring draw at sigma(x)=0 returns one child with certainty
        s = oc.SigmaProfile.interval(0.5, -1.0, 1.0)
        assert s.value(5.0) == 0.0
        rng = np.random.default_rng(4)
        assert all(oc.offspring_count(float(s.value(5.0)), rng) == 1 for _ in range(200))
