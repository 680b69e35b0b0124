import numpy as np
import pytest

from cnma.errors import McmcError
from cnma.mcmc import Block, McmcConfig, PosteriorSample, ess, rhat, run_chains, summarize


def std_normal_logpost(x):
    return float(-0.5 * np.sum(x**2))


def quick_config(**overrides):
    base = dict(n_chains=2, burn_in=500, keep=2000, seed=123)
    base.update(overrides)
    return McmcConfig(**base)


class TestRunChains:
    def test_standard_normal_moments(self):
        config = McmcConfig(n_chains=2, burn_in=1000, keep=5000, seed=7)
        sample = run_chains(
            std_normal_logpost,
            np.array([1.5]),
            [Block("x", (0,), scale=0.5)],
            config,
        )
        pooled = sample.pooled()[:, 0]
        assert abs(pooled.mean()) < 0.08
        assert 0.9 < pooled.var() < 1.1

    def test_vague_prior_with_uniform_sigma(self):
        # d ~ N(0, 1000 I) on 5 dims, sigma ~ Unif(0, 2): no data at all
        def logpost(x):
            sigma = x[5]
            if not 0.0 < sigma < 2.0:
                return -np.inf
            return float(-np.sum(x[:5] ** 2) / 2000.0)

        config = McmcConfig(n_chains=2, burn_in=2000, keep=8000, seed=11)
        blocks = [
            Block("d", tuple(range(5)), scale=20.0),
            Block("sigma", (5,), scale=0.5, log_scale=True),
        ]
        init = np.array([0.0] * 5 + [1.0])
        sample = run_chains(logpost, init, blocks, config)
        sigma_draws = sample.pooled()[:, 5]
        assert sigma_draws.mean() == pytest.approx(1.0, abs=0.05)
        d_draws = sample.pooled()[:, 0]
        assert abs(d_draws.mean()) < 0.25 * np.sqrt(1000)

    def test_symmetric_bimodal_mean_zero(self):
        def logpost(x):
            a = -0.5 * ((x[0] - 0.5) / 0.2) ** 2
            b = -0.5 * ((x[0] + 0.5) / 0.2) ** 2
            return float(np.logaddexp(a, b))

        sample = run_chains(
            logpost,
            np.array([0.0]),
            [Block("x", (0,), scale=0.5)],
            McmcConfig(n_chains=2, burn_in=2000, keep=10000, seed=3),
        )
        assert abs(sample.pooled()[:, 0].mean()) < 0.1

    def test_determinism(self):
        config = quick_config()
        kwargs = dict(
            logpost=std_normal_logpost,
            init=np.array([0.2]),
            blocks=[Block("x", (0,), scale=0.4)],
            config=config,
        )
        a = run_chains(**kwargs)
        b = run_chains(**kwargs)
        assert np.array_equal(a.draws, b.draws)

    def test_adaptation_frozen_after_burnin(self):
        sample = run_chains(
            std_normal_logpost,
            np.array([0.0]),
            [Block("x", (0,), scale=2.0)],
            quick_config(keep=4000),
        )
        assert sample.scales_after_burnin == sample.scales_final

    def test_partials_match_full_logpost(self):
        # two independent coordinates; partials ignore the other coordinate
        def full(x):
            return float(-0.5 * x[0] ** 2 - 0.5 * ((x[1] - 1.0) / 0.5) ** 2)

        def p0(x):
            return float(-0.5 * x[0] ** 2)

        def p1(x):
            return float(-0.5 * ((x[1] - 1.0) / 0.5) ** 2)

        blocks = [Block("a", (0,), 0.8), Block("b", (1,), 0.4)]
        config = McmcConfig(n_chains=2, burn_in=1500, keep=6000, seed=21)
        with_partials = run_chains(full, np.zeros(2), blocks, config, partials=[p0, p1])
        pooled = with_partials.pooled()
        assert pooled[:, 0].mean() == pytest.approx(0.0, abs=0.05)
        assert pooled[:, 1].mean() == pytest.approx(1.0, abs=0.05)
        assert pooled[:, 1].std() == pytest.approx(0.5, abs=0.05)

    def test_block_covariance_shaping(self):
        cov = np.array([[1.0, 0.95], [0.95, 1.0]])
        prec = np.linalg.inv(cov)

        def logpost(x):
            return float(-0.5 * x @ prec @ x)

        chol = np.linalg.cholesky(cov)
        sample = run_chains(
            logpost,
            np.zeros(2),
            [Block("xy", (0, 1), scale=1.0, cov_chol=chol)],
            McmcConfig(n_chains=2, burn_in=1500, keep=6000, seed=5),
        )
        pooled = sample.pooled()
        corr = np.corrcoef(pooled.T)[0, 1]
        assert corr == pytest.approx(0.95, abs=0.05)

    def test_nan_logpost_raises(self):
        def bad(x):
            return float("nan") if x[0] > 0.5 else 0.0

        with pytest.raises(McmcError):
            run_chains(
                bad,
                np.array([0.0]),
                [Block("x", (0,), scale=2.0)],
                quick_config(),
            )

    def test_scale_collapse_detected(self):
        init = np.array([0.0])

        def spike(x):
            return 0.0 if x[0] == 0.0 else -np.inf

        with pytest.raises(McmcError, match="collapse"):
            run_chains(
                spike,
                init,
                [Block("x", (0,), scale=1.0)],
                quick_config(burn_in=2000),
            )

    def test_blocks_must_partition(self):
        with pytest.raises(McmcError):
            run_chains(
                std_normal_logpost,
                np.zeros(2),
                [Block("x", (0,), 0.5)],
                quick_config(),
            )

    def test_infinite_init_rejected(self):
        def logpost(x):
            return -np.inf

        with pytest.raises(McmcError):
            run_chains(
                logpost, np.zeros(1), [Block("x", (0,), 0.5)], quick_config()
            )

    def test_per_chain_inits(self):
        inits = np.array([[5.0], [-5.0]])
        sample = run_chains(
            std_normal_logpost,
            inits,
            [Block("x", (0,), 0.5)],
            McmcConfig(n_chains=2, burn_in=2000, keep=3000, seed=9),
        )
        assert sample.rhat[0] < 1.05


class TestRhat:
    def test_identical_long_chains(self):
        rng = np.random.default_rng(0)
        chains = rng.normal(size=(2, 10000))
        assert rhat(chains) < 1.01

    def test_constant_distinct_chains(self):
        chains = np.vstack([np.zeros(100), np.ones(100)])
        assert rhat(chains) > 1.1

    def test_identical_constant_chains(self):
        assert rhat(np.zeros((2, 100))) == 1.0

    def test_single_chain_rejected(self):
        with pytest.raises(McmcError):
            rhat(np.zeros((1, 100)))

    def test_split_detects_drift(self):
        # one chain drifting, one stationary: split-chain flags it
        drifting = np.linspace(0, 5, 1000)
        flat = np.zeros(1000)
        assert rhat(np.vstack([drifting, flat])) > 1.1


class TestEss:
    def test_iid_close_to_n(self):
        rng = np.random.default_rng(1)
        chains = rng.normal(size=(2, 5000))
        assert ess(chains) > 0.5 * 10000

    def test_sticky_chain_small_ess(self):
        rng = np.random.default_rng(2)
        n = 5000
        x = np.zeros((2, n))
        for c in range(2):
            for i in range(1, n):
                x[c, i] = 0.995 * x[c, i - 1] + rng.normal() * 0.1
        assert ess(x) < 1000

    def test_constant_chains(self):
        assert ess(np.ones((2, 50))) == 100.0


class TestSummarize:
    @staticmethod
    def sample_from(draws):
        draws = np.asarray(draws, dtype=float)
        return PosteriorSample(
            names=tuple(f"p{i}" for i in range(draws.shape[-1])),
            draws=draws,
            acceptance={},
            rhat=np.ones(draws.shape[-1]),
            ess=np.full(draws.shape[-1], draws.shape[0] * draws.shape[1]),
            scales_after_burnin={},
            scales_final={},
        )

    def test_median_interpolation(self):
        sample = self.sample_from(np.array([[[1.0], [2.0]], [[3.0], [4.0]]]))
        out = summarize(sample, level=0.5)
        assert out["p0"]["median"] == pytest.approx(2.5)

    def test_normal_interval(self):
        rng = np.random.default_rng(8)
        draws = rng.normal(size=(2, 20000, 1))
        out = summarize(self.sample_from(draws), level=0.95)
        assert out["p0"]["lower"] == pytest.approx(-1.96, abs=0.05)
        assert out["p0"]["upper"] == pytest.approx(1.96, abs=0.05)

    def test_constant_draws_zero_width(self):
        sample = self.sample_from(np.full((2, 200, 1), 3.3))
        out = summarize(sample)
        assert out["p0"]["lower"] == out["p0"]["upper"] == pytest.approx(3.3)
