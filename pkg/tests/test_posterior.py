import numpy as np
import pytest
from scipy.stats import beta as beta_dist, ks_2samp

from conmult.core import CountVector, DirichletParams
from conmult.posterior import (
    GibbsState,
    _conditional_logpdf,
    _chebyshev_points,
    conditional_interval,
    run_gibbs,
    sample_conditional,
)
from conmult.sampling import RngStream, sample_ordered_prior_array


def state_of(theta):
    return GibbsState(theta=np.array(theta, dtype=float))


class TestConditionalInterval:
    def test_last_coordinate_formula(self):
        # k = 2: interval for the second coordinate given theta_1 = 0.5
        st = state_of([0.5, 0.3, 0.2])
        lo, hi = conditional_interval(2, st)
        assert (lo, hi) == (0.25, 0.5)

    def test_first_coordinate_formula(self):
        # k = 2: interval for the first coordinate given theta_2 = 0.3
        st = state_of([0.5, 0.3, 0.2])
        lo, hi = conditional_interval(1, st)
        assert lo == pytest.approx(0.4)
        assert hi == pytest.approx(0.7)

    def test_interval_inside_unit(self, rng):
        for _ in range(100):
            th = np.sort(rng.dirichlet(np.ones(5)))[::-1]
            if np.any(np.diff(th) == 0):
                continue
            st = state_of(th)
            for i in range(1, 5):
                lo, hi = conditional_interval(i, st)
                assert 0 < lo < hi < 1

    def test_bad_index(self):
        st = state_of([0.5, 0.3, 0.2])
        with pytest.raises(ValueError):
            conditional_interval(3, st)


class TestSampleConditional:
    def test_density_normalizes_on_grid(self):
        st = state_of([0.5, 0.3, 0.2])
        counts = np.array([3, 2, 1])
        al = np.array([1.0, 2.0, 1.5])
        lo, hi = conditional_interval(2, st)
        grid = _chebyshev_points(lo, hi, 512)
        logf = _conditional_logpdf(2, st, counts, al, grid)
        dens = np.exp(logf - logf.max())
        total = np.trapezoid(dens, grid)
        dens /= total
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)

    def test_flat_prior_matches_truncated_beta(self):
        # with flat weights the conditional rescales to a truncated Beta
        st = state_of([0.5, 0.3, 0.2])
        counts = np.array([4, 3, 2])
        al = np.ones(3)
        i = 2
        lo, hi = conditional_interval(i, st)
        s = 1.0 - (st.theta[:2].sum() - st.theta[i - 1])
        a, b = counts[i - 1] + 1, counts[2] + 1
        gen = np.random.default_rng(7)
        zlo, zhi = beta_dist.cdf(lo / s, a, b), beta_dist.cdf(hi / s, a, b)
        oracle = s * beta_dist.ppf(gen.uniform(zlo, zhi, 100_000), a, b)
        draws = np.array([
            sample_conditional(i, st, counts, al, gen) for _ in range(100_000)
        ])
        assert ks_2samp(draws, oracle).pvalue > 0.01

    def test_draws_respect_interval(self):
        st = state_of([0.4, 0.35, 0.25])
        counts = np.array([5, 1, 1])
        al = np.array([1.0, 3.0, 2.0])
        gen = np.random.default_rng(8)
        lo, hi = conditional_interval(1, st)
        for _ in range(2000):
            x = sample_conditional(1, st, counts, al, gen)
            assert lo <= x <= hi


class TestRunGibbs:
    def test_states_stay_in_cone_and_simplex(self):
        counts = CountVector(np.array([8, 5, 3, 1]))
        prior = DirichletParams(np.ones(4))
        samples, diag = run_gibbs(counts, prior, 500, 50, None, RngStream(300))
        assert samples.shape == (450, 4)
        assert np.all(samples[:, :-1] >= samples[:, 1:] - 1e-12)
        np.testing.assert_allclose(samples.sum(axis=1), 1.0, atol=1e-10)
        assert np.all(diag.autocorr_time >= 1.0)

    def test_deterministic_under_seed(self):
        counts = CountVector(np.array([8, 5, 3, 1]))
        prior = DirichletParams(np.ones(4))
        a, _ = run_gibbs(counts, prior, 200, 20, None, RngStream(301))
        b, _ = run_gibbs(counts, prior, 200, 20, None, RngStream(301))
        np.testing.assert_array_equal(a, b)

    def test_posterior_means_match_rejection_oracle(self, rng):
        # flat prior on the cone: posterior = Dirichlet(t+1) conditioned on order
        counts = CountVector(np.array([3, 2, 1]))
        prior = DirichletParams(np.ones(3))
        samples, diag = run_gibbs(counts, prior, 12_000, 1000, None, RngStream(302))
        draws = rng.dirichlet(counts.counts + 1.0, size=400_000)
        cone = draws[np.all(draws[:, :-1] >= draws[:, 1:], axis=1)]
        mean_oracle = cone.mean(axis=0)
        se_oracle = cone.std(axis=0) / np.sqrt(len(cone))
        n_eff = samples.shape[0] / diag.autocorr_time
        se_gibbs = samples.std(axis=0) / np.sqrt(n_eff)
        gap = np.abs(samples.mean(axis=0) - mean_oracle)
        assert np.all(gap < 3 * np.sqrt(se_oracle**2 + se_gibbs**2))

    def test_nine_cell_means_match_rejection_oracle(self, rng):
        # grouped abundance counts: the flat-cone posterior has ~4% cone mass,
        # so direct rejection from Dirichlet(t+1) is a feasible oracle
        counts = CountVector(np.array([241, 64, 31, 8, 7, 5, 3, 2, 2]))
        prior = DirichletParams(np.ones(9))
        samples, diag = run_gibbs(counts, prior, 8_000, 800, None, RngStream(306))
        draws = rng.dirichlet(counts.counts + 1.0, size=500_000)
        cone = draws[np.all(draws[:, :-1] >= draws[:, 1:], axis=1)]
        assert len(cone) > 10_000
        mean_oracle = cone.mean(axis=0)
        se_oracle = cone.std(axis=0) / np.sqrt(len(cone))
        n_eff = samples.shape[0] / diag.autocorr_time
        se_gibbs = samples.std(axis=0) / np.sqrt(n_eff)
        gap = np.abs(samples.mean(axis=0) - mean_oracle)
        assert np.all(gap < 3.5 * np.sqrt(se_oracle**2 + se_gibbs**2))

    def test_zero_data_chain_matches_prior(self):
        # no counts: the chain must leave the ordered prior invariant
        k1 = 4
        alphas = np.ones(k1)
        alphas[-1] += 2.0
        prior = DirichletParams(alphas)
        init = sample_ordered_prior_array(prior, 1, RngStream(303))[0]
        samples, _ = run_gibbs(None, prior, 10_000, 0, init, RngStream(304))
        thinned = samples[::10]
        direct = sample_ordered_prior_array(prior, thinned.shape[0], RngStream(305))
        for j in range(k1):
            assert ks_2samp(thinned[:, j], direct[:, j]).pvalue > 0.01

    def test_input_validation(self):
        prior = DirichletParams(np.ones(3))
        with pytest.raises(ValueError):
            run_gibbs(None, prior, 0, 0, None, RngStream(0))
        with pytest.raises(ValueError):
            run_gibbs(None, prior, 10, 10, None, RngStream(0))
        with pytest.raises(ValueError):
            run_gibbs(CountVector(np.array([1, 1])), prior, 10, 1, None, RngStream(0))
