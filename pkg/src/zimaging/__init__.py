"""Photon-statistics imaging: simulation, statistical images and inference.

A detector image is modelled as photons from each object position spread
over pixels by a discrete PSF, plus independent noise. Besides the mean
image this package tracks the variance, the ``Z = variance - mean`` image
and the pixel covariance, whose expectations follow closed forms in the
object mean, the object Z and the PSF.
"""

__version__ = "0.1.0"

from .core import (
    STANDARD_SLICES,
    CovarianceMode,
    NoiseModel,
    ObjectModel,
    Psf,
    Scenario,
    fwhm,
    make_gaussian_psf,
    mandel_q,
    paper_scenario,
    z_quantity,
)
from .errors import (
    AccumulatorOverflowError,
    ConfigError,
    InsufficientSamplesError,
    InvalidArgumentError,
    NotEstimableError,
    NotFittableError,
    NotRecoverableError,
    ShapeMismatchError,
    UndefinedQError,
    ZImagingError,
)
from .forward import (
    classical_convolution,
    effective_forward,
    effective_source_moments,
    enumerate_image_moments,
    expected_covariance_image,
    expected_images,
    expected_mean_image,
    expected_variance_image,
    expected_z_image,
)
from .inference import (
    CovarianceSlice,
    FitReport,
    estimate_psf_point,
    extract_slice,
    fit_background,
    fit_flat_z,
    recover_background,
    separate_noise,
)
from .sampler import (
    ImageSampler,
    rng_stream,
    sample_batch,
    sample_image,
    sample_multinomial,
    sample_source_counts,
    simulate,
)
from .stats import StatAccumulator, StatisticalImages, batch_standard_errors, merge

__all__ = [name for name in dir() if not name.startswith("_")]
