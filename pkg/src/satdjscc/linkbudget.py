"""Downlink budget: slant range, free-space path loss, thermal noise, SNR.

All budget arithmetic is done in SI units and decibels relative to one watt
(dBW). Antenna gains enter the budget exactly once, as additive dB terms;
the path-loss term is the pure free-space loss without gain factors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

SPEED_OF_LIGHT = 299_792_458.0  # m/s
BOLTZMANN = 1.380649e-23  # J/K
EARTH_RADIUS_M = 6_371_000.0  # mean radius
REFERENCE_TEMP_K = 290.0


def db_to_linear(value_db):
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value):
    if value <= 0:
        raise ParameterError(f"cannot express non-positive value {value} in dB")
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class LinkParameters:
    """Physical description of one satellite-to-ground link."""

    orbit_height_m: float
    carrier_freq_hz: float
    tx_power_w: float
    tx_gain_dbi: float
    rx_gain_dbi: float
    bandwidth_hz: float
    noise_figure_db: float

    def __post_init__(self):
        for name in ("orbit_height_m", "carrier_freq_hz", "tx_power_w",
                     "bandwidth_hz", "noise_figure_db"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value}")
        for name in ("tx_gain_dbi", "rx_gain_dbi"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class NoiseSpec:
    """Complex-noise description: per-component sigma for a target SNR.

    The defining identity is sigma^2 = signal_power / (2 * 10^(snr_db/10));
    construct instances through :func:`noise_sigma` to guarantee it.
    """

    snr_db: float
    sigma: float
    signal_power: float

    def __post_init__(self):
        if not (math.isfinite(self.signal_power) and self.signal_power > 0):
            raise ParameterError(f"signal_power must be > 0, got {self.signal_power}")
        expected = math.sqrt(self.signal_power / (2.0 * db_to_linear(self.snr_db)))
        if self.sigma != expected:
            raise ParameterError(
                f"inconsistent NoiseSpec: sigma={self.sigma!r}, expected {expected!r}"
            )


def slant_range(orbit_height_m, elevation_deg):
    """Line-of-sight distance to a satellite on an overhead pass.

    Uses the factored form d = sqrt((o+R)^2 - R^2 cos^2(e)) - R sin(e) with
    cos^2 computed as (1-sin)(1+sin), which keeps d(o, 90 deg) = o exact.
    """
    if not (orbit_height_m > 0 and math.isfinite(orbit_height_m)):
        raise ParameterError(f"orbit_height_m must be > 0, got {orbit_height_m}")
    if not 0.0 <= elevation_deg <= 90.0:
        raise ParameterError(
            f"elevation_deg must lie in [0, 90], got {elevation_deg}"
        )
    sin_e = math.sin(math.radians(elevation_deg))
    cos2_e = (1.0 - sin_e) * (1.0 + sin_e)
    radial = orbit_height_m + EARTH_RADIUS_M
    return math.sqrt(radial * radial - EARTH_RADIUS_M * EARTH_RADIUS_M * cos2_e) \
        - EARTH_RADIUS_M * sin_e


def free_space_path_loss_db(distance_m, carrier_freq_hz):
    """Free-space path loss 20*log10(4 pi d f / c), no antenna gain factors."""
    if distance_m <= 0:
        raise ParameterError(f"distance_m must be > 0, got {distance_m}")
    if carrier_freq_hz <= 0:
        raise ParameterError(f"carrier_freq_hz must be > 0, got {carrier_freq_hz}")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * carrier_freq_hz / SPEED_OF_LIGHT)


def thermal_noise_dbw(bandwidth_hz, noise_figure_db):
    """Receiver-referred thermal noise floor in dBW.

    System noise temperature is T = 290 K * (F - 1) with F the linear noise
    figure; a zero noise figure would give T = 0 and is rejected.
    """
    if bandwidth_hz <= 0:
        raise ParameterError(f"bandwidth_hz must be > 0, got {bandwidth_hz}")
    if noise_figure_db <= 0:
        raise ParameterError(
            f"noise_figure_db must be > 0 (got {noise_figure_db}); "
            "a zero figure implies a noiseless receiver"
        )
    t_sys = REFERENCE_TEMP_K * (db_to_linear(noise_figure_db) - 1.0)
    return linear_to_db(BOLTZMANN * t_sys * bandwidth_hz)


def expected_snr_db(link: LinkParameters, elevation_deg):
    """Budget SNR in dB: Pt + Gt + Gr - path loss - noise floor."""
    distance = slant_range(link.orbit_height_m, elevation_deg)
    loss = free_space_path_loss_db(distance, link.carrier_freq_hz)
    noise = thermal_noise_dbw(link.bandwidth_hz, link.noise_figure_db)
    return (linear_to_db(link.tx_power_w) + link.tx_gain_dbi + link.rx_gain_dbi
            - loss - noise)


def link_budget_breakdown(link: LinkParameters, elevation_deg):
    """Itemized budget terms, handy for the CLI report."""
    distance = slant_range(link.orbit_height_m, elevation_deg)
    loss = free_space_path_loss_db(distance, link.carrier_freq_hz)
    noise = thermal_noise_dbw(link.bandwidth_hz, link.noise_figure_db)
    snr = (linear_to_db(link.tx_power_w) + link.tx_gain_dbi + link.rx_gain_dbi
           - loss - noise)
    return {
        "elevation_deg": elevation_deg,
        "slant_range_m": distance,
        "tx_power_dbw": linear_to_db(link.tx_power_w),
        "tx_gain_dbi": link.tx_gain_dbi,
        "rx_gain_dbi": link.rx_gain_dbi,
        "path_loss_db": loss,
        "noise_floor_dbw": noise,
        "snr_db": snr,
    }


def noise_sigma(snr_db, signal_power):
    """Per-component Gaussian sigma realizing `snr_db` against `signal_power`."""
    if not (math.isfinite(signal_power) and signal_power > 0):
        raise ParameterError(f"signal_power must be > 0, got {signal_power}")
    sigma = math.sqrt(signal_power / (2.0 * db_to_linear(snr_db)))
    return NoiseSpec(snr_db=snr_db, sigma=sigma, signal_power=signal_power)


def sample_awgn(spec: NoiseSpec, count, rng):
    """Draw `count` complex noise samples n = sigma * (N(0,1) + j N(0,1)).

    The real parts of all samples are drawn first, then the imaginary parts,
    so a given generator state maps to one fixed noise vector.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    re = rng.standard_normal(count)
    im = rng.standard_normal(count)
    return spec.sigma * (re + 1j * im)
