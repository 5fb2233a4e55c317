"""Ruin-time densities and finite-time ruin probabilities for renewal risk models.

The surplus is ``u + c t - sum X_j`` with exponential claims of rate ``lam``
arriving at the epochs of a (possibly delayed) renewal process.
"""

__version__ = "0.1.0"

from .model import (DensityGrid, Explicit, Gamma, MixedExponential, Model, ModelError, ModelParams,  # noqa: E402
                    NetProfitWarning, Ordinary, SeriesConfig, Stationary, Tabulated, UnsupportedError, moments,
                    validate)
from .density import (DensityQuery, DomainError, KendallQuery, conditional_density, density, density_at,  # noqa: E402
                      kendall_sigma_density)
from .quadrature import (RuinProbResult, adjustment_coefficient, lundberg_ultimate, ruin_prob,  # noqa: E402
                         ruin_prob_curve, tabulate_density)
from .montecarlo import SimConfig, SimResult, compare_to_density, simulate  # noqa: E402

__all__ = [
    "DensityGrid", "DensityQuery", "DomainError", "Explicit", "Gamma", "KendallQuery", "MixedExponential",
    "Model", "ModelError", "ModelParams", "NetProfitWarning", "Ordinary", "RuinProbResult", "SeriesConfig",
    "SimConfig", "SimResult", "Stationary", "Tabulated", "UnsupportedError", "adjustment_coefficient",
    "compare_to_density", "conditional_density", "density", "density_at", "kendall_sigma_density",
    "lundberg_ultimate", "moments", "ruin_prob", "ruin_prob_curve", "simulate", "tabulate_density", "validate",
]
