"""Recovering PSF, Z and Q values from corrected covariance images.

Two row shapes carry the information:

* an isolated point source at ``k`` with quantity ``Z`` gives
  ``C(k, k+m) = Z p(0) p(m)``;
* a locally flat region with constant ``Z`` gives
  ``C(k, k+m) = Z a(m)`` with ``a(m) = sum_j p(j) p(m+j)``.

The lag-0 entry of a corrected row is the Z image, which also holds the
local noise Z; fits therefore leave it out and use it afterwards to
separate the noise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Psf
from .errors import InvalidArgumentError, NotEstimableError, NotFittableError, NotRecoverableError
from .stats import StatisticalImages

__all__ = [
    "CovarianceSlice",
    "PointPsfEstimate",
    "FitReport",
    "extract_slice",
    "estimate_psf_point",
    "fit_flat_z",
    "separate_noise",
    "recover_background",
    "fit_background",
]


@dataclass(frozen=True)
class CovarianceSlice:
    """Part of corrected covariance row ``center`` indexed by lag ``l - center``."""

    center: int
    lags: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if lags.shape != values.shape or lags.ndim != 1:
            raise InvalidArgumentError("lags and values must be matching 1-D arrays")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)

    @property
    def lag0(self) -> float:
        hit = np.flatnonzero(self.lags == 0)
        if hit.size == 0:
            raise InvalidArgumentError("slice has no lag-0 value")
        return float(self.values[hit[0]])

    @classmethod
    def from_row(cls, row, center: int, half_window: int | None = None) -> "CovarianceSlice":
        row = np.asarray(row, dtype=np.float64)
        if not 0 <= center < row.size:
            raise InvalidArgumentError(f"center {center} outside row of length {row.size}")
        lo, hi = 0, row.size - 1
        if half_window is not None:
            lo = max(lo, center - half_window)
            hi = min(hi, center + half_window)
        pos = np.arange(lo, hi + 1)
        return cls(center, pos - center, row[pos])


def _corrected_row(cov, k: int) -> np.ndarray:
    if isinstance(cov, StatisticalImages):
        return cov.covariance_row(k)
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 1:
        return cov
    if cov.ndim == 2 and cov.shape[0] == cov.shape[1]:
        return cov[k]
    raise InvalidArgumentError("expected StatisticalImages, a square matrix or a single row")


def extract_slice(cov, k: int, half_window: int | None = None) -> CovarianceSlice:
    """Corrected covariance row ``k`` restricted to lags ``-w..w``."""
    return CovarianceSlice.from_row(_corrected_row(cov, k), k, half_window)


@dataclass(frozen=True)
class PointPsfEstimate:
    psf: Psf
    z: float
    clipped: bool


def estimate_psf_point(cov, k: int, half_width: int, noise_z: float = 0.0) -> PointPsfEstimate:
    """PSF and Z of an isolated point source from its covariance row.

    ``noise_z`` is subtracted from the lag-0 (Z image) entry before
    inversion; leave it at 0 when the point dominates the local noise.
    """
    row = _corrected_row(cov, k)
    J = int(half_width)
    if k - J < 0 or k + J >= row.size:
        raise InvalidArgumentError(f"lags -{J}..{J} around {k} leave the image")
    r = row[k - J : k + J + 1].astype(np.float64).copy()
    r[J] -= noise_z
    total = math.fsum(r)
    scale = np.max(np.abs(r))
    if scale == 0 or abs(total) <= 1e-12 * scale * r.size:
        raise NotEstimableError(f"covariance row {k} carries no point-source signal")
    p = r / total
    clipped = bool(np.any(p < 0))
    if clipped:
        warnings.warn(f"negative PSF estimates at row {k} clipped to zero", RuntimeWarning, stacklevel=2)
        p = np.clip(p, 0.0, None)
    if r[J] == 0:
        raise NotEstimableError("lag-0 value is zero; point Z undefined")
    return PointPsfEstimate(Psf(p), total * total / r[J], clipped)


def fit_flat_z(cov_slice: CovarianceSlice, psf: Psf) -> float:
    """Least-squares Z of a flat region, lag 0 excluded."""
    _, c, a = _flat_design(cov_slice, psf)
    norm = float(np.dot(a, a))
    if norm == 0:
        raise NotFittableError("PSF autocorrelation vanishes off lag 0; nothing to fit")
    return float(np.dot(c, a)) / norm


def _flat_design(cov_slice: CovarianceSlice, psf: Psf):
    """Lags, observed values and model shape ``a(m)`` for every ``m != 0``."""
    auto = psf.autocorrelation()
    reach = 2 * psf.half_width
    use = cov_slice.lags != 0
    lags = cov_slice.lags[use]
    a = np.zeros(lags.size)
    inside = np.abs(lags) <= reach
    a[inside] = auto[lags[inside] + reach]
    return lags, cov_slice.values[use], a


def separate_noise(cov_slice: CovarianceSlice, z_b: float, psf: Psf) -> float:
    """Noise Z: the lag-0 value minus the flat model's own lag-0 value."""
    return cov_slice.lag0 - z_b * psf.squared_sum()


def recover_background(mean_image, noise_mean: float, z_b: float, k: int) -> tuple[float, float]:
    """Background mean flux and Mandel Q at ``k`` given the known noise mean."""
    o_b = float(np.asarray(mean_image)[k]) - noise_mean
    if o_b <= 0:
        raise NotRecoverableError(f"background mean at {k} is {o_b}, must be positive")
    return o_b, z_b / o_b


@dataclass
class FitReport:
    z_b: float
    z_n: float
    o_b: float
    q_b: float
    residual_rms: float
    center: int = -1
    lags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    observed: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    fitted: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        for key in ("lags", "observed", "fitted"):
            d.pop(key)
        return d


def fit_background(
    images: StatisticalImages,
    k: int,
    psf: Psf,
    noise_mean: float,
    half_window: int | None = None,
) -> FitReport:
    """Background and noise separation around a locally flat pixel ``k``.

    ``half_window`` defaults to the PSF half-width.
    """
    w = psf.half_width if half_window is None else int(half_window)
    sl = extract_slice(images, k, w)
    z_b = fit_flat_z(sl, psf)
    z_n = separate_noise(sl, z_b, psf)
    o_b, q_b = recover_background(images.mean, noise_mean, z_b, k)

    lags, observed, a = _flat_design(sl, psf)
    fitted = z_b * a
    rms = float(np.sqrt(np.mean((observed - fitted) ** 2))) if lags.size else 0.0
    return FitReport(z_b, z_n, o_b, q_b, rms, k, lags, observed, fitted)
