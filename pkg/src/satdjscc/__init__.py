"""Desk-scale joint source-channel coding over a statistical satellite link.

Subpackages: channel (three-state Loo fading), linkbudget (SNR chain),
autodiff (tensor core + Adam), model (encoder/decoder/attention), data
(multiband containers and synthetic imagery), harness (training and
evaluation), cli (command-line entry points).
"""

from .channel import (EnvironmentTable, FixedState, GainSeries, LooParameters,
                      MarkovChain, MarkovEvolution, ShadowState,
                      generate_gain_series, loo_cdf, loo_pdf, sample_loo,
                      stationary_distribution, step_markov)
from .errors import (ConfigError, FormatError, GraphError, NumericError,
                     ParameterError, SatDjsccError, ShapeError, StructureError)
from .linkbudget import (LinkParameters, NoiseSpec, expected_snr_db,
                         free_space_path_loss_db, noise_sigma, sample_awgn,
                         slant_range, thermal_noise_dbw)
from .model import (CodeShape, ConditionScaler, ConditionSpec, DjsccNetwork,
                    ModelConfig, SymbolVector, apply_channel,
                    derive_channel_count, power_normalize, psnr)

__all__ = [
    "ConfigError", "FormatError", "GraphError", "NumericError",
    "ParameterError", "SatDjsccError", "ShapeError", "StructureError",
    "EnvironmentTable", "FixedState", "GainSeries", "LooParameters",
    "MarkovChain", "MarkovEvolution", "ShadowState", "generate_gain_series",
    "loo_cdf", "loo_pdf", "sample_loo", "stationary_distribution",
    "step_markov",
    "LinkParameters", "NoiseSpec", "expected_snr_db",
    "free_space_path_loss_db", "noise_sigma", "sample_awgn", "slant_range",
    "thermal_noise_dbw",
    "CodeShape", "ConditionScaler", "ConditionSpec", "DjsccNetwork",
    "ModelConfig", "SymbolVector", "apply_channel", "derive_channel_count",
    "power_normalize", "psnr",
]
