"""Learn drift and diffusion of ergodic Ito diffusions from trajectory data and
check how errors in the learned model propagate to invariant statistics."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegeneracyError,
    DivergenceError,
    ErgoSdeError,
    InconclusiveScalingError,
    NumericError,
    RankError,
    UnsupportedKernelError,
)
from .sde import (
    EmConfig,
    SdeModel,
    TrainingSet,
    Trajectory,
    em_step,
    finite_difference_labels,
    make_benchmark_model,
    simulate,
    subsample,
)
from .kernels import ConstantKernel, GaussianKernel, PolynomialKernel, make_kernel
from .spectral import (
    EigenSystem,
    EmpiricalKernel,
    SpectralEstimator,
    assemble_empirical_kernel,
    eigendecompose,
    fit_spectral,
    lipschitz_bound,
    nystrom_extend,
    predict,
)
from .rff import (
    ReluFeatureMap,
    RffEstimator,
    design_matrix,
    fit_rff,
    frobenius_concentration,
    lipschitz_bound_rff,
    predict_rff,
    sample_features,
)
from .diffusion import DiffusionEstimate, SigmaFactor, estimate_diffusion, factor_sigma, spectral_error
from .stats import (
    Observable,
    ScalingReport,
    TwoPointReport,
    batch_means,
    ergodic_average,
    one_point_error_scaling,
    two_point_correlation,
    two_point_error_scaling,
)
