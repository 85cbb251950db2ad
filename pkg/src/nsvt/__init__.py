"""Student-t stochastic volatility regression with a latent gamma AR(1) precision."""
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DomainError,
    InfeasibleError,
    NonConvergenceError,
    NsvtError,
)
from .model import NsvtParams, SeriesData, simulate_nsvt

__version__ = "0.1.0"
