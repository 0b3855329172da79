import io
import math

import numpy as np
import pytest
from scipy import stats

from conftest import clinic_visit_counts, constant_channels, mc_z, weibull_channels
from honestmjp.ctmc_simulator import irregular_grids, regular_grids, simulate_panel
from honestmjp.honest_times import honest_log_density_array, indicator_match
from honestmjp.mcmc_engine import (
    AugmentedData,
    ChainAborted,
    ChainConfig,
    Prior,
    ThetaState,
    augment_all,
    collapsed_shape_log_target,
    posterior_summary,
    read_chain_csv,
    run_chain,
    truncation_report,
    update_constant_channel,
    update_parameters,
    update_shape_channel,
    weibull_log_accept_ratio,
    write_chain_csv,
)
from honestmjp.panel_io import IntervalArrays, PanelDataset
from honestmjp.tpm_oracle import InitialDistribution, exact_fit_constant


def intervals(t_prev, t_cur, x_from, x_to):
    n = len(t_prev)
    return IntervalArrays(np.zeros(n, int), np.asarray(t_prev, float), np.asarray(t_cur, float),
                          np.asarray(x_from, np.int8), np.asarray(x_to, np.int8))


def fixed_aug(iv, tau0, tau1):
    n = len(iv)
    return AugmentedData(iv, np.asarray(tau0, float), np.asarray(tau1, float),
                         np.ones(n, np.int64), np.zeros(n, bool))


def honest_by_rejection(p, s, t, n, rng):
    """Honest times from their density alone: atom at s, uniform-envelope rejection elsewhere."""
    atom = math.exp(float(honest_log_density_array(s, s, t, p)))
    grid = np.linspace(s, t, 20001)[1:]
    bound = 1.2 * np.exp(honest_log_density_array(grid, s, t, p)).max()
    out = np.full(n, s)
    cont = np.flatnonzero(rng.random(n) >= atom)
    todo = cont
    while todo.size:
        v = rng.uniform(s, t, todo.size)
        ok = rng.random(todo.size) * bound < np.exp(honest_log_density_array(v, s, t, p))
        out[todo[ok]] = v[ok]
        todo = todo[~ok]
    return out


@pytest.fixture(scope="module")
def small_panel():
    # 30 subjects x 50 visits = 1470 intervals, enough for two augmentation blocks
    return simulate_panel(weibull_channels(), regular_grids(30, 50, 100.0), rng=np.random.default_rng(21))


class TestAugmentAll:
    def test_tiny_rate_keeps_state(self):
        iv = intervals([0.0], [1.0], [0], [0])
        aug = augment_all(iv, constant_channels(1e-12, 0.5), np.random.default_rng(0))
        assert aug.attempts[0] == 1 or aug.tau0[0] <= aug.tau1[0]
        assert aug.augmented_likelihood() == 1.0

    def test_likelihood_is_one(self, small_panel, weibull_ch):
        aug = augment_all(small_panel, weibull_ch, seed=3, sweep=0)
        assert aug.augmented_likelihood() == 1.0
        iv = small_panel.intervals()
        assert np.all(indicator_match(aug.tau0, aug.tau1, iv.state_from, iv.state_to))

    def test_conditional_law_matches_brute_force(self, weibull_ch):
        # 0 -> 1 on (1, 10): tau0 must beat tau1
        n = 10**4
        iv = intervals(np.full(n, 1.0), np.full(n, 10.0), np.zeros(n), np.ones(n))
        aug = augment_all(iv, weibull_ch, np.random.default_rng(1))
        rng = np.random.default_rng(2)
        kept = []
        while sum(len(k) for k in kept) < n:
            t0 = honest_by_rejection(weibull_ch.channel0, 1.0, 10.0, 10**5, rng)
            t1 = honest_by_rejection(weibull_ch.channel1, 1.0, 10.0, 10**5, rng)
            kept.append(t1[t0 > t1])
        ref = np.concatenate(kept)[:n]
        assert stats.ks_2samp(aug.tau1, ref).pvalue > 1e-3
        # atom at the left end
        assert abs(mc_z((aug.tau1 == 1.0).astype(float), np.mean(ref == 1.0))) < 4

    def test_seed_streams_and_workers(self, small_panel, weibull_ch):
        a = augment_all(small_panel, weibull_ch, seed=5, sweep=2)
        b = augment_all(small_panel, weibull_ch, seed=5, sweep=2, workers=4)
        c = augment_all(small_panel, weibull_ch, seed=5, sweep=3)
        assert np.array_equal(a.tau0, b.tau0) and np.array_equal(a.tau1, b.tau1)
        assert not np.array_equal(a.tau0, c.tau0)

    def test_needs_a_stream(self, small_panel, weibull_ch):
        with pytest.raises(ValueError):
            augment_all(small_panel, weibull_ch)


class TestConstantUpdate:
    def test_conjugate_posterior(self):
        # three events, exposure 4 + 3 + 3 = 10 -> Gamma(3.1, rate 10.1)
        iv = intervals([0, 0, 0], [5, 5, 5], [0, 0, 0], [1, 1, 1])
        aug = fixed_aug(iv, [1.0, 2.0, 2.0], [0.0, 0.0, 0.0])
        rng = np.random.default_rng(4)
        x = np.array([update_constant_channel(aug, 0, Prior(), rng) for _ in range(10**5)])
        target = stats.gamma(3.1, scale=1 / 10.1)
        assert stats.kstest(x, target.cdf).pvalue > 1e-3
        assert abs(mc_z(x, target.mean())) < 3

    def test_no_data_gives_prior(self):
        aug = fixed_aug(intervals([], [], [], []), [], [])
        prior = Prior(rate_a=(2.0, 0.5), rate_b=(3.0, 0.5))
        rng = np.random.default_rng(5)
        x = np.array([update_constant_channel(aug, 0, prior, rng) for _ in range(2 * 10**4)])
        assert stats.kstest(x, stats.gamma(2.0, scale=1 / 3.0).cdf).pvalue > 1e-3


class TestShapeUpdate:
    @pytest.fixture
    def aug3(self):
        iv = intervals([0.5, 2.0, 4.0], [2.0, 4.0, 7.0], [0, 1, 0], [1, 0, 0])
        return fixed_aug(iv, [1.1, 2.0, 5.5], [0.5, 3.2, 4.5])

    def test_identity_proposal(self, aug3):
        assert weibull_log_accept_ratio(aug3, 0, 1.3, 1.3, Prior()) == 0.0

    def test_empty_augmentation_is_prior_ratio(self):
        aug = fixed_aug(intervals([], [], [], []), [], [])
        prior = Prior(shape_alpha=(3.0, 3.0), shape_beta=(2.0, 2.0))
        g, g_new = 0.9, 1.4
        pdf = stats.gamma(3.0, scale=0.5)
        expected = pdf.logpdf(g_new) - pdf.logpdf(g) + math.log(g_new / g)
        assert weibull_log_accept_ratio(aug, 1, g, g_new, prior) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("k", [0, 1])
    def test_ratio_matches_collapsed_target(self, aug3, k):
        prior = Prior(shape_alpha=(2.0, 2.0), shape_beta=(2.0, 2.0))
        for g, g_new in [(0.7, 1.1), (1.5, 0.4), (2.2, 2.9)]:
            direct = (collapsed_shape_log_target(aug3, k, "weibull", g_new, prior)
                      - collapsed_shape_log_target(aug3, k, "weibull", g, prior) + math.log(g_new / g))
            assert weibull_log_accept_ratio(aug3, k, g, g_new, prior) == pytest.approx(direct, rel=1e-10, abs=1e-12)

    @pytest.mark.parametrize("family", ["weibull", "gompertz"])
    def test_stationary_marginal(self, aug3, family):
        prior = Prior(shape_alpha=(2.0, 2.0), shape_beta=(2.0, 2.0))
        rng = np.random.default_rng(6)
        g = 1.0
        n = 10**5
        xs = np.empty(n)
        for i in range(n):
            g, _, _ = update_shape_channel(aug3, 0, family, g, prior, 0.8, rng)
            xs[i] = g
        # dense-grid normalisation of the collapsed target
        edges = np.concatenate([np.linspace(1e-6, 6.0, 41), [60.0]])
        fine = np.linspace(1e-6, 60.0, 60001)
        logp = np.array([collapsed_shape_log_target(aug3, 0, family, v, prior) for v in fine])
        dens = np.exp(logp - logp.max())
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2)])
        cdf /= cdf[-1]
        probs = np.diff(np.interp(edges, fine, cdf))
        hist = np.histogram(xs, edges)[0] / n
        assert 0.5 * np.abs(hist - probs).sum() < 0.05

    def test_channels_factorise(self, aug3):
        # the channel-0 conditional ignores channel-1 honest times
        other = fixed_aug(aug3.intervals, aug3.tau0, [0.6, 2.5, 6.9])
        prior = Prior()
        for fam in ("weibull", "gompertz"):
            assert collapsed_shape_log_target(aug3, 0, fam, 1.3, prior) == \
                collapsed_shape_log_target(other, 0, fam, 1.3, prior)
        a = update_parameters(aug3, ThetaState(1.0, 0.1, 1.0, 0.2), "weibull", prior, 0.3,
                              np.random.default_rng(7))[0]
        b = update_parameters(aug3, ThetaState(1.0, 0.1, 2.5, 9.0), "weibull", prior, 0.3,
                              np.random.default_rng(7))[0]
        assert (a.gamma0, a.lambda0) == (b.gamma0, b.lambda0)


class TestRunChain:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            ChainConfig(iterations=10, burn_in=20)
        with pytest.raises(ValueError):
            ChainConfig(proposal_sd=0.0)
        with pytest.raises(ValueError):
            Prior(rate_a=(0.0, 1.0))

    def test_deterministic_across_workers(self, small_panel):
        cfg = ChainConfig(iterations=30, burn_in=10, seed=9)
        a = run_chain(small_panel, "weibull", cfg=cfg)
        b = run_chain(small_panel, "weibull", cfg=cfg)
        c = run_chain(small_panel, "weibull", cfg=ChainConfig(iterations=30, burn_in=10, seed=9, workers=8))
        d = run_chain(small_panel, "weibull", cfg=ChainConfig(iterations=30, burn_in=10, seed=10))
        assert a.same_as(b) and a.same_as(c)
        assert not a.same_as(d)

    def test_likelihood_checked_every_sweep(self, small_panel):
        out = run_chain(small_panel, "gompertz", cfg=ChainConfig(iterations=25, burn_in=5))
        assert out.likelihood_checks == 25
        assert np.all(np.isfinite(out.draws)) and np.all(out.draws > 0)

    def test_exhaustion_aborts(self):
        panel = PanelDataset.from_arrays([[0.0, 0.01, 0.02, 0.03]] * 5, [[0, 1, 0, 1]] * 5)
        cfg = ChainConfig(iterations=5, burn_in=0, max_attempts=100)
        with pytest.raises(ChainAborted):
            run_chain(panel, "constant", cfg=cfg, theta0=ThetaState(1.0, 1e-9, 1.0, 1e-9))

    def test_constant_model_agrees_with_exact_fit(self):
        rng = np.random.default_rng(0)
        grids = irregular_grids(clinic_visit_counts(), 48.0, rng)
        panel = simulate_panel(constant_channels(), grids, InitialDistribution(), rng)
        fit = exact_fit_constant(panel)
        out = run_chain(panel, "constant", cfg=ChainConfig(iterations=2000, burn_in=500, seed=1))
        s = posterior_summary(out)
        for name, mle, ci in [("lambda0", fit.lambda0, fit.ci0), ("lambda1", fit.lambda1, fit.ci1)]:
            assert s[name].lo95 < ci[1] and ci[0] < s[name].hi95
            assert s[name].median == pytest.approx(mle, rel=0.1)
        assert np.all(out.draws[:, [0, 2]] == 1.0)


class TestSummaries:
    def test_linear_quantiles(self):
        s = posterior_summary(np.arange(1, 1001, dtype=float))["x0"]
        assert (s.median, s.lo95, s.hi95) == (500.5, pytest.approx(25.975), pytest.approx(975.025))

    def test_constant_draws(self):
        s = posterior_summary(np.full((50, 4), 0.3))
        assert all((v.median, v.lo95, v.hi95) == (0.3, 0.3, 0.3) for v in s.values())

    def test_truncation_extremes(self):
        panel = PanelDataset.from_arrays([np.arange(0.0, 20.0)] * 5, [np.arange(20) % 2] * 5)
        busy = run_chain(panel, "constant", cfg=ChainConfig(iterations=20, burn_in=5),
                         prior=Prior(rate_a=(5000.0, 5000.0), rate_b=(100.0, 100.0)),
                         theta0=ThetaState(1.0, 50.0, 1.0, 50.0))
        assert max(truncation_report(busy)) < 0.01
        quiet = PanelDataset.from_arrays([np.arange(0.0, 20.0)] * 5, [np.zeros(20)] * 5)
        idle = run_chain(quiet, "constant", cfg=ChainConfig(iterations=20, burn_in=5),
                         prior=Prior(rate_a=(1.0, 1.0), rate_b=(1e6, 1e6)),
                         theta0=ThetaState(1.0, 1e-6, 1.0, 1e-6))
        assert min(truncation_report(idle)) > 0.99

    def test_truncation_stable_across_seeds(self):
        panel = simulate_panel(constant_channels(), regular_grids(100, 50, 100.0),
                               rng=np.random.default_rng(11))
        fr = np.array([truncation_report(run_chain(panel, "constant",
                                                   cfg=ChainConfig(iterations=300, burn_in=100, seed=s)))
                       for s in range(1, 6)])
        assert np.all((fr > 0) & (fr < 1))
        assert np.all(fr.max(axis=0) - fr.min(axis=0) < 0.02)

    def test_chain_csv_round_trip(self, small_panel):
        out = run_chain(small_panel, "weibull", cfg=ChainConfig(iterations=20, burn_in=5, thin=3))
        buf = io.StringIO()
        write_chain_csv(out, buf, comment="model=weibull seed=0")
        back = read_chain_csv(io.StringIO(buf.getvalue()))
        assert np.array_equal(back.draws, out.kept_draws())
        assert np.array_equal(back.accepted, out.accepted[out.kept])
        assert back.model == "weibull"

    def test_chain_csv_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            read_chain_csv(io.StringIO("iteration,gamma0,lambda0,gamma1,lambda1,accept0,accept1,trunc0,trunc1\n1,2\n"))
