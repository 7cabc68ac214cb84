import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from conftest import loo_ks
from satdjscc.channel import (EnvironmentTable, FixedState, GainSeries,
                              LooParameters, MarkovChain, MarkovEvolution,
                              ShadowState, generate_gain_series, loo_cdf,
                              loo_pdf, sample_loo, simulate_states,
                              stationary_distribution, step_markov)
from satdjscc.errors import ConfigError, ParameterError, StructureError

EXAMPLE_CHAIN = MarkovChain(transition=np.array([
    [0.9, 0.1, 0.0],
    [0.2, 0.6, 0.2],
    [0.0, 0.3, 0.7],
]))

UNIFORM_CHAIN = MarkovChain(transition=np.full((3, 3), 1.0 / 3.0))


def make_table(**entries_by_state):
    entries = {}
    for name, params in entries_by_state.items():
        entries[(ShadowState.parse(name), 40.0)] = params
    return EnvironmentTable(environment="suburban", entries=entries,
                            chain=EXAMPLE_CHAIN)


class TestLooParameters:
    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            LooParameters(alpha_db=math.inf, psi_db=1.0, mp_db=-10.0)
        with pytest.raises(ParameterError):
            LooParameters(alpha_db=0.0, psi_db=-1.0, mp_db=-10.0)
        with pytest.raises(ParameterError):
            LooParameters(alpha_db=0.0, psi_db=1.0, mp_db=math.nan)
        with pytest.raises(ParameterError):
            LooParameters(alpha_db=-math.inf, psi_db=1.0, mp_db=-10.0)

    def test_degenerate_constructor_allows_neg_inf(self):
        params = LooParameters.degenerate(alpha_db=-math.inf, psi_db=0.0, mp_db=0.0)
        assert params.alpha_db == -math.inf
        with pytest.raises(ParameterError):
            LooParameters.degenerate(alpha_db=math.inf, psi_db=0.0, mp_db=0.0)


class TestSampleLoo:
    def test_unit_ray_collapse(self):
        # psi = 0 and no multipath: |h| = 10^(alpha/20) up to one ulp of the
        # complex magnitude
        params = LooParameters.degenerate(alpha_db=0.0, psi_db=0.0, mp_db=-math.inf)
        h = sample_loo(params, 4, np.random.default_rng(0))
        assert np.all(np.abs(np.abs(h) - 1.0) <= 5e-16)

    def test_degenerate_collapse_general_alpha(self):
        params = LooParameters.degenerate(alpha_db=-6.0, psi_db=0.0, mp_db=-math.inf)
        h = sample_loo(params, 1000, np.random.default_rng(1))
        ray = 10.0 ** (-6.0 / 20.0)
        assert np.all(np.abs(np.abs(h) - ray) <= 5e-16 * ray)

    def test_pure_multipath_rayleigh_mean(self):
        # Rayleigh with total power 1 has mean sqrt(pi/4)
        params = LooParameters.degenerate(alpha_db=-math.inf, psi_db=0.0, mp_db=0.0)
        h = sample_loo(params, 10 ** 5, np.random.default_rng(2))
        assert float(np.mean(np.abs(h))) == pytest.approx(
            math.sqrt(math.pi / 4.0), rel=0.01
        )

    def test_determinism(self):
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        a = sample_loo(params, 256, np.random.default_rng(42))
        b = sample_loo(params, 256, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_rejects_bad_count(self):
        params = LooParameters(alpha_db=0.0, psi_db=1.0, mp_db=-10.0)
        with pytest.raises(ParameterError):
            sample_loo(params, 0, np.random.default_rng(0))

    def test_phase_uniformity(self):
        # pure multipath phase should be uniform: chi-square over 16 bins
        params = LooParameters.degenerate(alpha_db=-math.inf, psi_db=0.0, mp_db=0.0)
        h = sample_loo(params, 10 ** 5, np.random.default_rng(3))
        phases = np.angle(h)
        counts, _ = np.histogram(phases, bins=16, range=(-np.pi, np.pi))
        _, p_value = stats.chisquare(counts)
        assert p_value > 0.01

    @pytest.mark.parametrize("alpha_db,psi_db,mp_db", [
        (-2.0, 1.0, -10.0),
        (0.0, 0.5, -18.0),
        (-8.0, 2.5, -6.0),
    ])
    def test_distribution_matches_quadrature_cdf(self, alpha_db, psi_db, mp_db):
        params = LooParameters(alpha_db=alpha_db, psi_db=psi_db, mp_db=mp_db)
        h = sample_loo(params, 10 ** 5, np.random.default_rng(11))
        assert loo_ks(params, h) < 0.01


class TestLooPdf:
    def test_zero_at_origin(self):
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        assert loo_pdf(params, 0.0) == 0.0

    def test_rejects_negative_r(self):
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        with pytest.raises(ParameterError):
            loo_pdf(params, -0.5)

    def test_small_psi_collapses_to_rician(self):
        params = LooParameters(alpha_db=0.0, psi_db=0.02, mp_db=-20.0)
        sigma = math.sqrt(10.0 ** (-20.0 / 10.0) / 2.0)
        grid = np.linspace(0.7, 1.3, 121)
        values = np.array([loo_pdf(params, r) for r in grid])
        # density maximum sits near the unit ray amplitude
        assert abs(grid[np.argmax(values)] - 1.0) < 0.05
        rician = stats.rice.pdf(grid, 1.0 / sigma, scale=sigma)
        assert np.max(np.abs(values - rician)) < 0.05 * rician.max()

    def test_normalization(self):
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        total, _ = integrate.quad(lambda r: loo_pdf(params, r), 0.0, 6.0, limit=300)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_cdf_consistent_with_pdf(self):
        # central difference of the CDF equals the density
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        for r in (0.3, 0.8, 1.2):
            eps = 1e-5
            lo, hi = loo_cdf(params, [r - eps, r + eps])
            assert (hi - lo) / (2 * eps) == pytest.approx(loo_pdf(params, r), rel=1e-4)


class TestMarkov:
    def test_chain_validation(self):
        with pytest.raises(ParameterError):
            MarkovChain(transition=np.array([[0.5, 0.5], [0.5, 0.5]]))
        with pytest.raises(ParameterError):
            MarkovChain(transition=np.array([
                [0.9, 0.2, 0.0], [0.2, 0.6, 0.2], [0.0, 0.3, 0.7],
            ]))
        with pytest.raises(ParameterError):
            MarkovChain(transition=np.array([
                [1.2, -0.2, 0.0], [0.2, 0.6, 0.2], [0.0, 0.3, 0.7],
            ]))

    def test_identity_chain_is_absorbing(self):
        chain = MarkovChain(transition=np.eye(3))
        rng = np.random.default_rng(0)
        for _ in range(32):
            assert step_markov(chain, ShadowState.SHADOW, rng) == ShadowState.SHADOW

    def test_uniform_chain_occupancy(self):
        states = simulate_states(UNIFORM_CHAIN, ShadowState.LOS, 10 ** 6,
                                 np.random.default_rng(5))
        occupancy = np.bincount(states, minlength=3) / states.size
        assert np.all(np.abs(occupancy - 1.0 / 3.0) < 0.01)

    def test_example_chain_occupancy_matches_stationary(self):
        states = simulate_states(EXAMPLE_CHAIN, ShadowState.LOS, 10 ** 6,
                                 np.random.default_rng(6))
        occupancy = np.bincount(states, minlength=3) / states.size
        pi = stationary_distribution(EXAMPLE_CHAIN)
        assert float(np.abs(occupancy - pi).sum()) < 0.01

    def test_simulate_states_matches_repeated_steps(self):
        trajectory = simulate_states(EXAMPLE_CHAIN, ShadowState.SHADOW, 200,
                                     np.random.default_rng(8))
        rng = np.random.default_rng(8)
        state = ShadowState.SHADOW
        for value in trajectory:
            state = step_markov(EXAMPLE_CHAIN, state, rng)
            assert int(state) == value


class TestStationary:
    def test_uniform_chain(self):
        pi = stationary_distribution(UNIFORM_CHAIN)
        assert np.allclose(pi, 1.0 / 3.0, atol=1e-12)

    def test_identity_chain_rejected(self):
        with pytest.raises(StructureError):
            stationary_distribution(MarkovChain(transition=np.eye(3)))

    def test_matches_power_iteration(self):
        pi = stationary_distribution(EXAMPLE_CHAIN)
        vec = np.full(3, 1.0 / 3.0)
        for _ in range(20000):
            vec = vec @ EXAMPLE_CHAIN.transition
        assert np.max(np.abs(pi - vec)) < 1e-9


class TestEnvironmentTable:
    def test_nearest_elevation_lookup(self):
        low = LooParameters(alpha_db=0.0, psi_db=0.5, mp_db=-18.0)
        high = LooParameters(alpha_db=-1.0, psi_db=0.4, mp_db=-20.0)
        table = EnvironmentTable(
            environment="urban",
            entries={
                (ShadowState.LOS, 40.0): low,
                (ShadowState.LOS, 80.0): high,
            },
            chain=EXAMPLE_CHAIN,
        )
        assert table.lookup(ShadowState.LOS, 45.0) is low
        assert table.lookup(ShadowState.LOS, 70.0) is high
        assert table.lookup(ShadowState.LOS, 60.0) is low  # tie goes low

    def test_missing_state_raises(self):
        table = make_table(los=LooParameters(alpha_db=0.0, psi_db=0.5, mp_db=-18.0))
        with pytest.raises(ConfigError):
            table.lookup(ShadowState.SHADOW, 40.0)

    def test_unknown_environment_rejected(self):
        with pytest.raises(ConfigError):
            EnvironmentTable(environment="desert", entries={}, chain=EXAMPLE_CHAIN)

    def test_elevation_bounds_enforced(self):
        with pytest.raises(ConfigError):
            EnvironmentTable(
                environment="urban",
                entries={
                    (ShadowState.LOS, 30.0):
                        LooParameters(alpha_db=0.0, psi_db=0.5, mp_db=-18.0),
                },
                chain=EXAMPLE_CHAIN,
            )


class TestGainSeries:
    def test_fixed_mode_unit_ray(self):
        table = make_table(
            los=LooParameters.degenerate(alpha_db=0.0, psi_db=0.0, mp_db=-math.inf)
        )
        series = generate_gain_series(table, 40.0, FixedState(ShadowState.LOS),
                                      64, np.random.default_rng(0))
        assert np.all(np.abs(np.abs(series.samples) - 1.0) <= 5e-16)
        assert np.all(series.states == int(ShadowState.LOS))

    def test_markov_identity_chain_stays_in_initial(self):
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        table = EnvironmentTable(
            environment="suburban",
            entries={(s, 40.0): params for s in ShadowState},
            chain=MarkovChain(transition=np.eye(3)),
        )
        series = generate_gain_series(
            table, 40.0, MarkovEvolution(ShadowState.DEEP_SHADOW), 128,
            np.random.default_rng(1),
        )
        assert np.all(series.states == int(ShadowState.DEEP_SHADOW))

    def test_markov_occupancy_matches_stationary(self):
        params = LooParameters(alpha_db=-2.0, psi_db=1.0, mp_db=-10.0)
        table = EnvironmentTable(
            environment="suburban",
            entries={(s, 40.0): params for s in ShadowState},
            chain=EXAMPLE_CHAIN,
        )
        series = generate_gain_series(
            table, 40.0, MarkovEvolution(ShadowState.LOS), 10 ** 6,
            np.random.default_rng(2),
        )
        occupancy = np.bincount(series.states, minlength=3) / len(series)
        pi = stationary_distribution(EXAMPLE_CHAIN)
        assert float(np.abs(occupancy - pi).sum()) < 0.01

    def test_bit_identical_for_same_seed(self):
        table = make_table(los=LooParameters(alpha_db=0.0, psi_db=0.5, mp_db=-18.0))
        runs = [
            generate_gain_series(table, 40.0, FixedState(ShadowState.LOS), 512,
                                 np.random.default_rng(33))
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].samples, runs[1].samples)
        assert np.array_equal(runs[0].states, runs[1].states)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            GainSeries(samples=np.ones(3, dtype=complex), states=np.zeros(2, np.int8))

    def test_unknown_mode_rejected(self):
        table = make_table(los=LooParameters(alpha_db=0.0, psi_db=0.5, mp_db=-18.0))
        with pytest.raises(ParameterError):
            generate_gain_series(table, 40.0, "fixed", 8, np.random.default_rng(0))
