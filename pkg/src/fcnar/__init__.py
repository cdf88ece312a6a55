"""Functional-coefficient network autoregression: simulation, estimation,
inference, model selection and forecasting for panels of time series on a
network."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from ._kernels import BACKEND
from .design import InsufficientSampleError, build_designs
from .estimate import (
    FitResult,
    SingularDesignError,
    cross_validate_lambda,
    fit,
    fit_ls,
    fit_ridge,
)
from .inference import (
    FunctionCI,
    TestReport,
    beta_covariance,
    f_test,
    function_ci,
    homogeneity_test,
    joint_subvector_covariance,
    linearity_test,
    make_constraints,
)
from .model import (
    CoefficientSet,
    Exogenous,
    FcnarSpec,
    Lagged,
    NetworkMatrix,
    StabilityReport,
    companion_matrix,
    spectral_radius,
    stability_check,
)
from .selection import (
    ForecastReport,
    SelectionGrid,
    aic,
    fit_baseline,
    forecast_one_step,
    select,
)
from .simulate import (
    NoiseSpec,
    PanelSeries,
    SimConfig,
    UnstableModelError,
    banded_weight_matrix,
    make_scenario,
    simulate,
)
from .splinebasis import CoefficientFunction, SplineBasis, knots_from_quantiles, truncated_power_basis

__all__ = [name for name in dir() if not name.startswith("_") and name not in ("version", "PackageNotFoundError")]
