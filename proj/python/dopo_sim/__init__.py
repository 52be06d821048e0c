"""Positive-P Monte Carlo simulator for two DOPOs with mutual injections.

Thin wrapper around the pybind11 extension `_dopo_sim`.
"""

from _dopo_sim import (  # noqa: F401
    ConfigError,
    IoError,
    NumericalError,
    __version__,
    binary_entropy,
    classical_mixture_covariance,
    derive_params,
    discord_convention_table,
    gaussian_discord,
    preset_config,
    pump_rate,
    run_experiment,
    symplectic_eigenvalues,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericalError",
    "__version__",
    "binary_entropy",
    "classical_mixture_covariance",
    "derive_params",
    "discord_convention_table",
    "gaussian_discord",
    "preset_config",
    "pump_rate",
    "run_experiment",
    "symplectic_eigenvalues",
]
