"""Exact moment accumulation over image stacks.

Photon counts are integers, so the accumulator keeps integer sums of
``I(k)``, ``I(k)^2`` and ``I(k) I(l)``. Merging is plain integer addition,
which makes results independent of how a stack is partitioned; floating
point only enters in :meth:`StatAccumulator.finalize`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CovarianceMode
from .errors import (
    AccumulatorOverflowError,
    InsufficientSamplesError,
    InvalidArgumentError,
    ShapeMismatchError,
)

__all__ = ["StatAccumulator", "StatisticalImages", "merge", "batch_standard_errors"]

_INT64_MAX = 2**63 - 1
# float64 represents every integer below this exactly
_FLOAT_EXACT = 2**53


def _exact_ratio(numerator: np.ndarray, denominator: int) -> np.ndarray:
    """Correctly rounded float64 of integer ``numerator / denominator``."""
    flat = [int(x) / denominator for x in numerator.ravel()]
    return np.array(flat, dtype=np.float64).reshape(numerator.shape)


@dataclass
class StatisticalImages:
    """Per-pixel statistics of an image stack (or their expectations).

    ``cov_raw`` and ``cov_corrected`` hold the covariance rows listed in
    ``rows`` (all pixels for a full matrix); both are None when covariance
    was not accumulated. The corrected matrix carries the Z image on its
    diagonal in place of the variance.
    """

    mean: np.ndarray
    variance: np.ndarray
    z: np.ndarray
    cov_raw: np.ndarray | None = None
    cov_corrected: np.ndarray | None = None
    rows: np.ndarray | None = None
    n: int | None = None

    @property
    def length(self) -> int:
        return self.mean.size

    @property
    def q(self) -> np.ndarray:
        """Mandel Q image; NaN where the mean is zero."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.mean > 0, self.z / self.mean, np.nan)

    def covariance_row(self, k: int, corrected: bool = True) -> np.ndarray:
        matrix = self.cov_corrected if corrected else self.cov_raw
        if matrix is None:
            raise InvalidArgumentError("covariance was not computed")
        hits = np.flatnonzero(self.rows == k)
        if hits.size == 0:
            raise InvalidArgumentError(f"covariance row {k} not available")
        return matrix[hits[0]]


class StatAccumulator:
    """Integer sums over a stack of length-``K`` count images."""

    def __init__(self, length: int, covariance: CovarianceMode | None = None):
        if length < 1:
            raise InvalidArgumentError("length must be positive")
        self.length = int(length)
        self.covariance = covariance if covariance is not None else CovarianceMode.full()
        self.rows = self.covariance.row_indices(self.length)
        self.n = 0
        self.sum = np.zeros(self.length, dtype=np.int64)
        self.sumsq = np.zeros(self.length, dtype=np.int64)
        self.cross = None if self.rows is None else np.zeros((self.rows.size, self.length), dtype=np.int64)
        self.max_count = 0

    def __repr__(self):
        return f"StatAccumulator(length={self.length}, n={self.n}, covariance={self.covariance})"

    def _check_headroom(self, n_new: int, max_new: int) -> None:
        m = max(self.max_count, max_new)
        # every sum of squares / cross product is bounded by n * m^2
        if (self.n + n_new) * m * m > _INT64_MAX:
            raise AccumulatorOverflowError(
                f"int64 accumulator would overflow: n={self.n + n_new}, max count={m}"
            )

    def add(self, image) -> None:
        """Accumulate a single image."""
        self.add_stack(np.asarray(image)[None, :])

    def add_stack(self, images) -> None:
        """Accumulate every row of a ``(B, K)`` integer array."""
        x = np.asarray(images)
        if x.ndim != 2 or x.shape[1] != self.length:
            raise ShapeMismatchError(f"expected images of length {self.length}, got shape {x.shape}")
        if x.shape[0] == 0:
            return
        if not np.issubdtype(x.dtype, np.integer):
            if not np.all(x == np.round(x)):
                raise InvalidArgumentError("counts must be integers")
        x = x.astype(np.int64)
        if x.min() < 0:
            raise InvalidArgumentError("counts must be non-negative")
        b = x.shape[0]
        m = int(x.max())
        self._check_headroom(b, m)

        self.sum += x.sum(axis=0)
        self.sumsq += (x * x).sum(axis=0)
        if self.cross is not None:
            sub = x[:, self.rows]
            if b * m * m < _FLOAT_EXACT:
                # all partial sums are integers below 2^53: BLAS result is exact
                xf = x.astype(np.float64)
                self.cross += (sub.astype(np.float64).T @ xf).astype(np.int64)
            else:
                self.cross += sub.T @ x
        self.n += b
        self.max_count = max(self.max_count, m)

    def _compatible(self, other: "StatAccumulator") -> None:
        if self.length != other.length or self.covariance != other.covariance:
            raise ShapeMismatchError("accumulators differ in length or covariance mode")

    def merge(self, other: "StatAccumulator") -> "StatAccumulator":
        """Return a new accumulator holding both stacks."""
        self._compatible(other)
        out = StatAccumulator(self.length, self.covariance)
        out.n = self.n + other.n
        out.max_count = max(self.max_count, other.max_count)
        out._check_headroom(0, 0)
        out.sum = self.sum + other.sum
        out.sumsq = self.sumsq + other.sumsq
        if self.cross is not None:
            out.cross = self.cross + other.cross
        return out

    def copy(self) -> "StatAccumulator":
        return self.merge(StatAccumulator(self.length, self.covariance))

    def same_state(self, other: "StatAccumulator") -> bool:
        return (
            self.length == other.length
            and self.covariance == other.covariance
            and self.n == other.n
            and np.array_equal(self.sum, other.sum)
            and np.array_equal(self.sumsq, other.sumsq)
            and (self.cross is None) == (other.cross is None)
            and (self.cross is None or np.array_equal(self.cross, other.cross))
        )

    def finalize(self) -> StatisticalImages:
        """Mean, unbiased variance, Z and covariance images."""
        n = self.n
        if n < 2:
            raise InsufficientSamplesError(f"need at least 2 images, have {n}")
        s = self.sum.astype(object)
        denom = n * (n - 1)

        mean = _exact_ratio(s, n)
        variance = _exact_ratio(n * self.sumsq.astype(object) - s * s, denom)
        z = variance - mean

        cov_raw = cov_corrected = None
        if self.cross is not None:
            cross_num = n * self.cross.astype(object) - np.outer(s[self.rows], s)
            cov_raw = _exact_ratio(cross_num, denom)
            cov_corrected = cov_raw.copy()
            r = np.arange(self.rows.size)
            cov_corrected[r, self.rows] = z[self.rows]
        return StatisticalImages(
            mean=mean,
            variance=variance,
            z=z,
            cov_raw=cov_raw,
            cov_corrected=cov_corrected,
            rows=None if self.rows is None else self.rows.copy(),
            n=n,
        )


def merge(a: StatAccumulator, b: StatAccumulator) -> StatAccumulator:
    return a.merge(b)


def batch_standard_errors(accumulators) -> StatisticalImages:
    """Batch-means standard errors of the merged estimates.

    Each accumulator is finalized on its own; the spread of the per-batch
    estimates, divided by the square root of the batch count, estimates the
    standard error of the estimate from the merged stack when batches are of
    equal size. Fields of the returned object hold standard errors.
    """
    accs = list(accumulators)
    if len(accs) < 2:
        raise InsufficientSamplesError("need at least 2 batches")
    finals = [a.finalize() for a in accs]
    g = len(finals)

    def se(name):
        vals = [getattr(f, name) for f in finals]
        if vals[0] is None:
            return None
        return np.std(np.stack(vals), axis=0, ddof=1) / np.sqrt(g)

    return StatisticalImages(
        mean=se("mean"),
        variance=se("variance"),
        z=se("z"),
        cov_raw=se("cov_raw"),
        cov_corrected=se("cov_corrected"),
        rows=finals[0].rows,
        n=sum(a.n for a in accs),
    )
