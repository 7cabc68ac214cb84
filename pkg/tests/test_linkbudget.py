import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satdjscc.errors import ParameterError
from satdjscc.linkbudget import (BOLTZMANN, EARTH_RADIUS_M, SPEED_OF_LIGHT,
                                 LinkParameters, NoiseSpec, db_to_linear,
                                 expected_snr_db, free_space_path_loss_db,
                                 linear_to_db, noise_sigma, sample_awgn,
                                 slant_range, thermal_noise_dbw)

TABLE = LinkParameters(
    orbit_height_m=750e3,
    carrier_freq_hz=2150e6,
    tx_power_w=1.0,
    tx_gain_dbi=6.0,
    rx_gain_dbi=35.0,
    bandwidth_hz=750e3,
    noise_figure_db=2.0,
)


def reference_slant_range(orbit_height_m, elevation_deg):
    # independent re-evaluation in the textbook form, with the explicit
    # division by the Earth radius
    e = math.radians(elevation_deg)
    ratio = (orbit_height_m + EARTH_RADIUS_M) / EARTH_RADIUS_M
    return EARTH_RADIUS_M * (
        math.sqrt(ratio ** 2 - math.cos(e) ** 2) - math.sin(e)
    )


class TestSlantRange:
    def test_zenith_exact(self):
        assert slant_range(750e3, 90.0) == 750e3

    def test_zenith_exact_other_heights(self):
        for height in (300e3, 550e3, 1200e3, 36_000e3):
            assert slant_range(height, 90.0) == height

    def test_40_degrees_matches_reference(self):
        assert slant_range(750e3, 40.0) == pytest.approx(
            reference_slant_range(750e3, 40.0), abs=1.0
        )

    def test_horizon_matches_reference(self):
        d = slant_range(750e3, 0.0)
        assert d == pytest.approx(reference_slant_range(750e3, 0.0), abs=1.0)
        assert d == pytest.approx(3.181e6, rel=5e-4)

    def test_rejects_out_of_range_elevation(self):
        with pytest.raises(ParameterError):
            slant_range(750e3, -1.0)
        with pytest.raises(ParameterError):
            slant_range(750e3, 90.5)
        with pytest.raises(ParameterError):
            slant_range(-5.0, 45.0)

    @given(st.integers(min_value=200_000, max_value=50_000_000))
    @settings(max_examples=100, deadline=None)
    def test_zenith_identity_property(self, height_m):
        # exact whenever o + R_E is itself representable (integer metres are)
        assert slant_range(float(height_m), 90.0) == float(height_m)

    @given(st.floats(min_value=200e3, max_value=50_000e3))
    @settings(max_examples=100, deadline=None)
    def test_zenith_identity_arbitrary_floats(self, height):
        # for heights whose sum with R_E rounds, the identity holds to one
        # ulp of (o + R_E)
        d = slant_range(height, 90.0)
        assert abs(d - height) <= math.ulp(height + EARTH_RADIUS_M)

    def test_strictly_decreasing_in_elevation(self):
        elevations = np.linspace(0.0, 90.0, 91)
        distances = [slant_range(750e3, e) for e in elevations]
        assert all(a > b for a, b in zip(distances, distances[1:]))


class TestPathLoss:
    def test_unit_argument_gives_zero_db(self):
        d = SPEED_OF_LIGHT / (4.0 * math.pi)
        assert free_space_path_loss_db(d, 1.0) == pytest.approx(0.0, abs=1e-9)

    def test_reference_value(self):
        expected = 20.0 * math.log10(
            4.0 * math.pi * 1.0905e6 * 2150e6 / SPEED_OF_LIGHT
        )
        value = free_space_path_loss_db(1.0905e6, 2150e6)
        assert value == pytest.approx(expected, abs=1e-9)
        assert value == pytest.approx(159.85, abs=0.01)

    def test_doubling_distance_adds_6db(self):
        base = free_space_path_loss_db(1.2e6, 2150e6)
        doubled = free_space_path_loss_db(2.4e6, 2150e6)
        assert doubled - base == pytest.approx(20.0 * math.log10(2.0), abs=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            free_space_path_loss_db(0.0, 1e9)
        with pytest.raises(ParameterError):
            free_space_path_loss_db(1e6, 0.0)


class TestThermalNoise:
    def test_table_value(self):
        assert thermal_noise_dbw(750e3, 2.0) == pytest.approx(-147.55, abs=0.01)

    def test_double_bandwidth_adds_3db(self):
        one = thermal_noise_dbw(750e3, 2.0)
        two = thermal_noise_dbw(1500e3, 2.0)
        assert two - one == pytest.approx(10.0 * math.log10(2.0), abs=1e-9)

    def test_unit_excess_figure(self):
        # F - 1 = 1 at 3.0103 dB, so T_sys is the 290 K reference
        nf = 10.0 * math.log10(2.0)
        expected = 10.0 * math.log10(BOLTZMANN * 290.0 * 750e3)
        assert thermal_noise_dbw(750e3, nf) == pytest.approx(expected, abs=1e-9)

    def test_rejects_zero_noise_figure(self):
        with pytest.raises(ParameterError):
            thermal_noise_dbw(750e3, 0.0)


class TestExpectedSnr:
    def test_canonical_operating_points(self):
        snr40 = expected_snr_db(TABLE, 40.0)
        snr80 = expected_snr_db(TABLE, 80.0)
        assert math.isfinite(snr40)
        assert snr80 > snr40
        # canonical values under the stated conventions, for regression
        assert snr40 == pytest.approx(28.706, abs=1e-3)
        assert snr80 == pytest.approx(31.837, abs=1e-3)

    def test_gain_linearity(self):
        bumped = LinkParameters(
            orbit_height_m=TABLE.orbit_height_m,
            carrier_freq_hz=TABLE.carrier_freq_hz,
            tx_power_w=TABLE.tx_power_w,
            tx_gain_dbi=TABLE.tx_gain_dbi + 10.0,
            rx_gain_dbi=TABLE.rx_gain_dbi,
            bandwidth_hz=TABLE.bandwidth_hz,
            noise_figure_db=TABLE.noise_figure_db,
        )
        delta = expected_snr_db(bumped, 40.0) - expected_snr_db(TABLE, 40.0)
        assert delta == pytest.approx(10.0, abs=1e-9)

    def test_monotonicities(self):
        def snr(elev=40.0, **overrides):
            merged = dict(
                orbit_height_m=750e3, carrier_freq_hz=2150e6, tx_power_w=1.0,
                tx_gain_dbi=6.0, rx_gain_dbi=35.0, bandwidth_hz=750e3,
                noise_figure_db=2.0,
            )
            merged.update(overrides)
            return expected_snr_db(LinkParameters(**merged), elev)

        assert snr(elev=60.0) > snr(elev=40.0)
        assert snr(tx_power_w=2.0) > snr(tx_power_w=1.0)
        assert snr(tx_gain_dbi=7.0) > snr(tx_gain_dbi=6.0)
        assert snr(rx_gain_dbi=36.0) > snr(rx_gain_dbi=35.0)
        assert snr(bandwidth_hz=1500e3) < snr(bandwidth_hz=750e3)


class TestNoise:
    def test_sigma_at_0db(self):
        spec = noise_sigma(0.0, 1.0)
        assert spec.sigma == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_sigma_at_10db(self):
        assert noise_sigma(10.0, 1.0).sigma == pytest.approx(math.sqrt(0.05), abs=1e-12)

    def test_3db_shrinks_sigma_by_root2(self):
        lo = noise_sigma(10.0, 1.0).sigma
        hi = noise_sigma(10.0 + 10.0 * math.log10(2.0), 1.0).sigma
        assert lo / hi == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_inconsistent_spec_rejected(self):
        with pytest.raises(ParameterError):
            NoiseSpec(snr_db=0.0, sigma=1.0, signal_power=1.0)

    def test_zero_sigma_yields_zero_noise(self):
        spec = noise_sigma(math.inf, 1.0)  # noiseless limit
        assert spec.sigma == 0.0
        samples = sample_awgn(spec, 100, np.random.default_rng(0))
        assert np.all(samples == 0.0)

    def test_mean_power_matches_two_sigma_squared(self):
        spec = noise_sigma(0.0, 1.0)
        samples = sample_awgn(spec, 10 ** 6, np.random.default_rng(123))
        mean_power = float(np.mean(np.abs(samples) ** 2))
        assert mean_power == pytest.approx(2.0 * spec.sigma ** 2, rel=5e-3)

    @pytest.mark.parametrize("snr_db", [0.0, 7.0, 15.0])
    def test_monte_carlo_snr(self, snr_db):
        spec = noise_sigma(snr_db, 1.0)
        samples = sample_awgn(spec, 10 ** 6, np.random.default_rng(7))
        measured = 10.0 * math.log10(1.0 / float(np.mean(np.abs(samples) ** 2)))
        assert measured == pytest.approx(snr_db, abs=0.1)

    def test_determinism(self):
        spec = noise_sigma(5.0, 1.0)
        a = sample_awgn(spec, 64, np.random.default_rng(9))
        b = sample_awgn(spec, 64, np.random.default_rng(9))
        assert np.array_equal(a, b)


@given(st.floats(min_value=1e-20, max_value=1e20))
@settings(max_examples=200, deadline=None)
def test_db_round_trip(value):
    again = db_to_linear(linear_to_db(value))
    assert again == pytest.approx(value, rel=1e-12)


def test_link_parameters_validation():
    with pytest.raises(ParameterError):
        LinkParameters(0.0, 2e9, 1.0, 6.0, 35.0, 750e3, 2.0)
    with pytest.raises(ParameterError):
        LinkParameters(750e3, 2e9, 1.0, -1.0, 35.0, 750e3, 2.0)
    with pytest.raises(ParameterError):
        LinkParameters(750e3, 2e9, 1.0, 6.0, 35.0, 750e3, 0.0)
