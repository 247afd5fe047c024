"""Max-min rate and energy-efficiency optimization for multicell RIS-assisted
MISO broadcast channels with NOMA and improper Gaussian signaling."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ChannelSet,
    CovSet,
    InvalidInputError,
    NetworkConfig,
    NumericalDomainError,
    RateReport,
    ReflectState,
    RNOError,
)

__all__ = [
    "ChannelSet",
    "CovSet",
    "InvalidInputError",
    "NetworkConfig",
    "NumericalDomainError",
    "RateReport",
    "ReflectState",
    "RNOError",
    "__version__",
]
