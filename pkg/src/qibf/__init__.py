"""State estimation from quantized innovations.

A transmitter observes a linear Gaussian plant, forms a one-step output
prediction error (the innovation), quantizes it to one of m symbols, and
ships the symbol over a rate-limited channel.  This package implements the
symbol receivers:

* an exact grid-based Bayesian filter over the augmented state
  (plant state, transmitter Kalman prediction error) for Kalman-innovation
  symbols (:mod:`qibf.receiver_k`);
* a grid-based Bayesian filter driven by the receiver's own prediction,
  replicated at the transmitter (:mod:`qibf.receiver_r`);
* a Kalman-like moment recursion for multi-level quantized innovations,
  reducing to the sign-of-innovations filter at one bit (:mod:`qibf.mlq_s`);

plus quantizer construction and Lloyd-Max design, a reproducible simulation
harness with CSV/JSON artifacts, and bootstrap particle-filter oracles for
verification.
"""

__version__ = "0.1.0"

from ._kernels import active_backend
from .errors import (
    ConfigError,
    DegenerateDensityError,
    DimensionMismatchError,
    ExperimentError,
    InvalidQuantizerError,
    LloydMaxConvergenceError,
    OracleDegenerateError,
    QibfError,
    SingularGainError,
    UnsupportedDimensionError,
)
from .gridpdf import (
    GridDensity,
    UniformGrid,
    default_grid,
    gaussian_density,
    marginal,
    mean_cov,
    normalize,
    trapezoid_mass,
)
from .model import (
    LinearGaussianModel,
    NoiseRealization,
    TrajectoryLog,
    measure,
    replay,
    simulate,
    step_truth,
)
from .quantizer import (
    QuantCell,
    Quantizer,
    build_uniform_midrise,
    cell_probability,
    interval_probability,
    lloyd_max_design,
)

__all__ = [
    "__version__",
    "active_backend",
    # errors
    "QibfError", "DimensionMismatchError", "DegenerateDensityError",
    "SingularGainError", "UnsupportedDimensionError", "LloydMaxConvergenceError",
    "InvalidQuantizerError", "OracleDegenerateError", "ConfigError", "ExperimentError",
    # grids
    "UniformGrid", "GridDensity", "trapezoid_mass", "normalize", "mean_cov",
    "marginal", "gaussian_density", "default_grid",
    # model
    "LinearGaussianModel", "NoiseRealization", "TrajectoryLog",
    "step_truth", "measure", "simulate", "replay",
    # quantizer
    "Quantizer", "QuantCell", "build_uniform_midrise", "lloyd_max_design",
    "cell_probability", "interval_probability",
]
