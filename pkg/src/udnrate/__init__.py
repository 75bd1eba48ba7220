"""Rate outage analysis, design and simulation for ultra-dense downlink networks."""

__version__ = "0.1.0"

from .analytics import (  # noqa: E402
    DomainError,
    NetworkConfig,
    Scheme,
    activity_probability,
    cell_load_pmf,
    delay_pmf,
    rate_cdf,
    rho,
    sir_cdf,
    tagged_cell_load_pmf,
)

__all__ = [
    "__version__",
    "DomainError",
    "NetworkConfig",
    "Scheme",
    "activity_probability",
    "cell_load_pmf",
    "delay_pmf",
    "rate_cdf",
    "rho",
    "sir_cdf",
    "tagged_cell_load_pmf",
]
