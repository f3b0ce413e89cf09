"""Domain types for the 1-D statistical imaging model.

Positions are 0-based pixel indices throughout. An object position ``k``
sends its photons to pixels ``k + j`` for ``j`` in ``[-J, J]`` with
probabilities ``p(j)``; pixels also receive independent local noise.

For any photon-count distribution with mean ``m`` and variance ``v`` the
package uses two derived quantities:

* the Mandel Q parameter ``v / m - 1``
* the Z quantity ``v - m`` (equivalently ``m * Q``)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace as _replace

import numpy as np

from .errors import InvalidArgumentError, UndefinedQError

__all__ = [
    "ObjectModel",
    "NoiseModel",
    "Psf",
    "CovarianceMode",
    "Scenario",
    "make_gaussian_psf",
    "z_quantity",
    "mandel_q",
    "paper_scenario",
    "fwhm",
    "STANDARD_SLICES",
]

# Default covariance rows for the reference scenario, labelled A-D in reports.
STANDARD_SLICES = (48, 72, 64, 96)
_NORM_TOL = 1e-14


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


def _check_mean_q(mean: np.ndarray, q: np.ndarray, what: str) -> None:
    if mean.shape != q.shape:
        raise InvalidArgumentError(f"{what}: mean and q lengths differ")
    if mean.size == 0:
        raise InvalidArgumentError(f"{what}: length must be positive")
    if np.any(mean < 0):
        raise InvalidArgumentError(f"{what}: mean must be non-negative")
    if np.any(q < -1):
        raise InvalidArgumentError(f"{what}: q must be >= -1")


@dataclass(frozen=True)
class ObjectModel:
    """Per-position expected flux and Mandel Q of an uncorrelated source."""

    mean_flux: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean_flux, "mean_flux")
        q = _frozen_array(self.q, "q")
        _check_mean_q(mean, q, "ObjectModel")
        object.__setattr__(self, "mean_flux", mean)
        object.__setattr__(self, "q", q)

    @property
    def length(self) -> int:
        return self.mean_flux.size

    @property
    def z(self) -> np.ndarray:
        return self.mean_flux * self.q

    @property
    def variance(self) -> np.ndarray:
        return self.mean_flux * (1.0 + self.q)

    @classmethod
    def zeros(cls, length: int) -> "ObjectModel":
        return cls(np.zeros(length), np.zeros(length))


@dataclass(frozen=True)
class NoiseModel:
    """Per-pixel local noise, independent between pixels and of the signal."""

    mean: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean, "mean")
        q = _frozen_array(self.q, "q")
        _check_mean_q(mean, q, "NoiseModel")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "q", q)

    @property
    def length(self) -> int:
        return self.mean.size

    @property
    def z(self) -> np.ndarray:
        return self.mean * self.q

    @property
    def variance(self) -> np.ndarray:
        return self.mean * (1.0 + self.q)

    @classmethod
    def flat(cls, length: int, mean: float, q: float = 0.0) -> "NoiseModel":
        return cls(np.full(length, float(mean)), np.full(length, float(q)))


@dataclass(frozen=True)
class Psf:
    """Discrete shift-invariant kernel ``p(j)``, ``j = -J..J``.

    Weights are renormalized to unit sum on construction (left untouched
    when they already sum to 1 within ``1e-14``).
    """

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights, "weights")
        if w.size % 2 != 1:
            raise InvalidArgumentError("PSF must have odd length 2J+1")
        if np.any(w < 0):
            raise InvalidArgumentError("PSF weights must be non-negative")
        total = math.fsum(w)
        if total <= 0:
            raise InvalidArgumentError("PSF weights must have positive sum")
        if abs(total - 1.0) > _NORM_TOL:
            # already-normalized input is kept as is so that construction
            # is idempotent bit for bit
            w = w / total
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def half_width(self) -> int:
        return (self.weights.size - 1) // 2

    @property
    def offsets(self) -> np.ndarray:
        J = self.half_width
        return np.arange(-J, J + 1)

    def __getitem__(self, j: int) -> float:
        """Weight at signed offset ``j``."""
        J = self.half_width
        if not -J <= j <= J:
            return 0.0
        return float(self.weights[j + J])

    def autocorrelation(self) -> np.ndarray:
        """``a(m) = sum_j p(j) p(m + j)`` for ``m = -2J..2J``."""
        return np.correlate(self.weights, self.weights, mode="full")

    def squared_sum(self) -> float:
        return float(np.dot(self.weights, self.weights))

    @classmethod
    def delta(cls) -> "Psf":
        return cls(np.ones(1))


def make_gaussian_psf(sigma: float, half_width: int | None = None) -> Psf:
    """Gaussian kernel sampled at integer offsets and renormalized.

    ``half_width`` defaults to ``ceil(4 * sigma)``.
    """
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    if half_width is None:
        half_width = math.ceil(4 * sigma)
    if int(half_width) != half_width or half_width < 1:
        raise InvalidArgumentError(f"half_width must be a positive integer, got {half_width}")
    j = np.arange(-int(half_width), int(half_width) + 1, dtype=np.float64)
    return Psf(np.exp(-(j * j) / (2.0 * sigma * sigma)))


def z_quantity(mean: float, variance: float) -> float:
    """Variance minus mean. Zero for Poisson light."""
    return variance - mean


def mandel_q(mean: float, variance: float) -> float:
    if mean == 0:
        raise UndefinedQError("Mandel Q is undefined for zero mean")
    return variance / mean - 1.0


def fwhm(profile) -> float:
    """Full width at half maximum of a sampled single-peaked curve.

    Half-maximum crossings on both sides of the peak are located by linear
    interpolation between neighbouring samples (unit spacing).
    """
    y = np.asarray(profile, dtype=np.float64)
    i = int(np.argmax(y))
    half = y[i] / 2.0
    left = i
    while left > 0 and y[left - 1] > half:
        left -= 1
    right = i
    while right < y.size - 1 and y[right + 1] > half:
        right += 1
    if left == 0 or right == y.size - 1:
        raise InvalidArgumentError("profile does not fall below half maximum on both sides")
    # crossing between left-1 (below) and left (above)
    xl = (left - 1) + (half - y[left - 1]) / (y[left] - y[left - 1])
    xr = right + (y[right] - half) / (y[right] - y[right + 1])
    return float(xr - xl)


@dataclass(frozen=True)
class CovarianceMode:
    """Which rows of the cross-product matrix to accumulate."""

    kind: str = "full"
    rows: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("full", "slices", "off"):
            raise InvalidArgumentError(f"unknown covariance mode {self.kind!r}")
        if self.kind == "slices":
            if not self.rows:
                raise InvalidArgumentError("slices mode needs at least one row")
            rows = tuple(int(r) for r in self.rows)
            if len(set(rows)) != len(rows):
                raise InvalidArgumentError("duplicate slice rows")
            object.__setattr__(self, "rows", rows)
        elif self.rows:
            raise InvalidArgumentError(f"{self.kind} mode takes no rows")

    @classmethod
    def full(cls) -> "CovarianceMode":
        return cls("full")

    @classmethod
    def off(cls) -> "CovarianceMode":
        return cls("off")

    @classmethod
    def slices(cls, *rows: int) -> "CovarianceMode":
        return cls("slices", tuple(rows))

    @classmethod
    def parse(cls, text: str) -> "CovarianceMode":
        """Parse ``full``, ``off`` or ``slices=48,64`` (also ``slices 48 64``)."""
        text = text.strip()
        if text in ("full", "off"):
            return cls(text)
        if text.startswith("slices"):
            rest = text[len("slices"):].lstrip(" =:")
            parts = [p for p in rest.replace(",", " ").split() if p]
            try:
                return cls.slices(*(int(p) for p in parts))
            except ValueError as exc:
                raise InvalidArgumentError(f"bad slice list {rest!r}") from exc
        raise InvalidArgumentError(f"unknown covariance mode {text!r}")

    def row_indices(self, length: int) -> np.ndarray | None:
        """Row indices to accumulate, or None when covariance is off."""
        if self.kind == "off":
            return None
        if self.kind == "full":
            return np.arange(length)
        rows = np.asarray(self.rows, dtype=np.intp)
        if np.any(rows < 0) or np.any(rows >= length):
            raise InvalidArgumentError(f"slice rows out of range for length {length}")
        return rows

    def __str__(self) -> str:
        if self.kind == "slices":
            return "slices=" + ",".join(str(r) for r in self.rows)
        return self.kind


@dataclass(frozen=True)
class Scenario:
    object: ObjectModel
    psf: Psf
    noise: NoiseModel
    n_samples: int = 1000
    master_seed: int = 0
    covariance: CovarianceMode = field(default_factory=CovarianceMode.full)

    def __post_init__(self):
        if self.object.length != self.noise.length:
            raise InvalidArgumentError("object and noise lengths differ")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise InvalidArgumentError("n_samples must be a positive integer")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidArgumentError("master_seed must fit in 64 unsigned bits")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "master_seed", int(self.master_seed))
        self.covariance.row_indices(self.length)

    @property
    def length(self) -> int:
        return self.object.length

    def replace(self, **changes) -> "Scenario":
        return _replace(self, **changes)


def paper_scenario(
    q_foreground: float = 0.2,
    *,
    n_samples: int = 1000,
    master_seed: int = 2021,
    covariance: CovarianceMode | None = None,
) -> Scenario:
    """128-pixel test object used throughout the simulations.

    Point source at 64 (500/s), pairs at 21/28 (250/s) and 46/51 (300/s),
    a sinusoidal extended source over 81..113 (mean 30, amplitude 5, one
    period), background 10/s with Q=0.2 elsewhere, flat noise of 5/s with
    Q=0.1 and a Gaussian PSF with sigma=3 px.
    """
    K = 128
    mean = np.full(K, 10.0)
    q = np.full(K, 0.2)
    foreground = np.zeros(K, dtype=bool)

    for pos, flux in ((64, 500.0), (21, 250.0), (28, 250.0), (46, 300.0), (51, 300.0)):
        mean[pos] = flux
        foreground[pos] = True
    k = np.arange(81, 114)
    mean[k] = 30.0 + 5.0 * np.sin(2.0 * np.pi * (k - 81) / 32.0)
    foreground[k] = True
    q[foreground] = q_foreground

    return Scenario(
        object=ObjectModel(mean, q),
        psf=make_gaussian_psf(3.0, 12),
        noise=NoiseModel.flat(K, 5.0, 0.1),
        n_samples=n_samples,
        master_seed=master_seed,
        covariance=covariance if covariance is not None else CovarianceMode.full(),
    )
