"""Double-smoothed nonparametric volatility estimation for jump-diffusions."""

__version__ = "0.1.0"

from .estimators import (  # noqa: E402
    EstimatorConfig,
    MomentEstimate,
    double_smoothed_moments,
    local_time_hat,
    single_smoothed_m2,
)
from .kernels import KernelSpec, kernel_by_name, theta_phi  # noqa: E402
from .models import ModelSpec, SamplePath, SimConfig, builtin_models, make_model, simulate_path  # noqa: E402
from .neighbors import neighbor_index  # noqa: E402
from .volatility import DoubleSmoothedVolatility, SingleSmoothedVolatility  # noqa: E402

__all__ = [
    "__version__",
    "EstimatorConfig",
    "MomentEstimate",
    "double_smoothed_moments",
    "local_time_hat",
    "single_smoothed_m2",
    "KernelSpec",
    "kernel_by_name",
    "theta_phi",
    "ModelSpec",
    "SamplePath",
    "SimConfig",
    "builtin_models",
    "make_model",
    "simulate_path",
    "neighbor_index",
    "DoubleSmoothedVolatility",
    "SingleSmoothedVolatility",
]
