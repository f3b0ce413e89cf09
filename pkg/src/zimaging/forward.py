"""Analytic expectations of the statistical images.

Given the object, PSF and noise, the expected images are

* mean:        sum_j O(k-j) p(j) + N(k)
* variance:    sum_j [O(k-j) p(j) + Z_O(k-j) p(j)^2] + var_N(k)
* Z:           sum_j Z_O(k-j) p(j)^2 + Z_N(k)
* covariance:  sum_j Z_O(k-j) p(j) p(l-k+j)          (k != l)

The object is zero-padded outside ``[0, K-1]``. The sampler discretizes
source counts (clamp at 0, then randomized rounding), so :func:`effective_forward`
replaces each source's mean and Z with the exact moments of the
discretized distribution; statistical comparisons use that version.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .core import NoiseModel, ObjectModel, Psf
from .stats import StatisticalImages

__all__ = [
    "classical_convolution",
    "expected_mean_image",
    "expected_variance_image",
    "expected_z_image",
    "expected_covariance_image",
    "expected_images",
    "effective_source_moments",
    "effective_models",
    "effective_forward",
    "spread_matrix",
    "ExactMoments",
    "enumerate_image_moments",
]

_TAIL = 1e-16


def _convolve(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded ``out(k) = sum_j values(k-j) kernel(j)``, centred kernel."""
    J = (kernel.size - 1) // 2
    full = np.convolve(values, kernel, mode="full")
    return full[J : J + values.size]


def classical_convolution(obj: ObjectModel, psf: Psf, noise_mean) -> np.ndarray:
    noise_mean = np.asarray(noise_mean, dtype=np.float64)
    if noise_mean.shape != (obj.length,):
        raise ValueError("noise_mean length must match the object")
    return _convolve(obj.mean_flux, psf.weights) + noise_mean


def expected_mean_image(obj: ObjectModel, psf: Psf, noise: NoiseModel) -> np.ndarray:
    return classical_convolution(obj, psf, noise.mean)


def expected_variance_image(obj: ObjectModel, psf: Psf, noise: NoiseModel) -> np.ndarray:
    p = psf.weights
    return _convolve(obj.mean_flux, p) + _convolve(obj.z, p * p) + noise.variance


def expected_z_image(obj: ObjectModel, psf: Psf, noise: NoiseModel) -> np.ndarray:
    p = psf.weights
    return _convolve(obj.z, p * p) + noise.z


def spread_matrix(length: int, psf: Psf) -> np.ndarray:
    """``P[k, m] = p(k - m)``: probability a photon from ``m`` lands on ``k``."""
    J = psf.half_width
    d = np.arange(length)[:, None] - np.arange(length)[None, :]
    P = np.zeros((length, length))
    inside = np.abs(d) <= J
    P[inside] = psf.weights[d[inside] + J]
    return P


def expected_covariance_image(
    obj: ObjectModel,
    psf: Psf,
    noise: NoiseModel | None = None,
    rows=None,
) -> np.ndarray:
    """Expected covariance rows with the Z image on the diagonal.

    Noise adds nothing off the diagonal. The diagonal entries are the
    expected Z image (including the noise Z when ``noise`` is given),
    matching the corrected covariance estimator.
    """
    K = obj.length
    P = spread_matrix(K, psf)
    rows = np.arange(K) if rows is None else np.asarray(rows, dtype=np.intp)
    C = (P[rows] * obj.z[None, :]) @ P.T
    if noise is None:
        noise = NoiseModel(np.zeros(K), np.zeros(K))
    z = expected_z_image(obj, psf, noise)
    C[np.arange(rows.size), rows] = z[rows]
    return C


def expected_images(
    obj: ObjectModel,
    psf: Psf,
    noise: NoiseModel,
    rows=None,
    covariance: bool = True,
) -> StatisticalImages:
    """All expected images bundled like an estimator result (``n`` is None)."""
    mean = expected_mean_image(obj, psf, noise)
    variance = expected_variance_image(obj, psf, noise)
    z = expected_z_image(obj, psf, noise)
    cov_raw = cov_corrected = row_idx = None
    if covariance:
        row_idx = np.arange(obj.length) if rows is None else np.asarray(rows, dtype=np.intp)
        cov_corrected = expected_covariance_image(obj, psf, noise, row_idx)
        cov_raw = cov_corrected.copy()
        cov_raw[np.arange(row_idx.size), row_idx] = variance[row_idx]
    return StatisticalImages(mean, variance, z, cov_raw, cov_corrected, row_idx, None)


def effective_source_moments(mean: float, q: float) -> tuple[float, float]:
    """Exact mean and Z of the sampler's integer source counts.

    The sampler draws ``s ~ Poisson(mean)``, forms
    ``x = max(sqrt(1 + q) (s - mean) + mean, 0)`` and rounds ``x`` down or up
    with probability equal to its fractional part (``q == 0`` keeps ``s``).
    Here the Poisson pmf is enumerated over a support whose neglected tail
    mass is below 1e-16 on each side and the rounding is averaged
    analytically.
    """
    if mean < 0:
        raise ValueError("mean must be non-negative")
    if q < -1:
        raise ValueError("q must be >= -1")
    if mean == 0:
        return 0.0, 0.0
    if q == 0:
        return float(mean), 0.0
    lo = int(sps.poisson.ppf(_TAIL, mean))
    hi = int(sps.poisson.isf(_TAIL, mean)) + 1
    s = np.arange(max(lo, 0), hi + 1)
    w = sps.poisson.pmf(s, mean)
    w = w / math.fsum(w)
    x = np.maximum(math.sqrt(1.0 + q) * (s - mean) + mean, 0.0)
    fl = np.floor(x)
    frac = x - fl
    m_eff = math.fsum(w * x)
    second = math.fsum(w * (fl * fl + frac * (2.0 * fl + 1.0)))
    var_eff = second - m_eff * m_eff
    return m_eff, var_eff - m_eff


def _effective_arrays(mean: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cache: dict[tuple[float, float], tuple[float, float]] = {}
    m_out = np.empty_like(mean)
    q_out = np.empty_like(mean)
    for i, key in enumerate(zip(mean.tolist(), q.tolist())):
        if key not in cache:
            m, z = effective_source_moments(*key)
            cache[key] = (m, z / m if m > 0 else 0.0)
        m_out[i], q_out[i] = cache[key]
    return m_out, q_out


def effective_models(obj: ObjectModel, noise: NoiseModel) -> tuple[ObjectModel, NoiseModel]:
    """Object and noise models carrying the sampler's exact per-pixel moments."""
    om, oq = _effective_arrays(obj.mean_flux, obj.q)
    nm, nq = _effective_arrays(noise.mean, noise.q)
    return ObjectModel(om, oq), NoiseModel(nm, nq)


def effective_forward(
    obj: ObjectModel,
    psf: Psf,
    noise: NoiseModel,
    rows=None,
    covariance: bool = True,
) -> StatisticalImages:
    eff_obj, eff_noise = effective_models(obj, noise)
    return expected_images(eff_obj, psf, eff_noise, rows=rows, covariance=covariance)


@dataclass
class ExactMoments:
    mean: np.ndarray
    covariance: np.ndarray  # full K x K, variance on the diagonal

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


def _multinomial_outcomes(n: int, psf: np.ndarray):
    """All ``(x, prob)`` with ``sum(x) == n`` for a multinomial over ``psf``."""
    W = psf.size
    for cut in itertools.combinations_with_replacement(range(W), n):
        x = np.bincount(np.asarray(cut, dtype=np.intp), minlength=W)
        coef = math.factorial(n)
        for c in x:
            coef //= math.factorial(int(c))
        yield x, coef * float(np.prod(psf ** x))


def enumerate_image_moments(source_pmfs, psf: Psf, noise_pmfs=None) -> ExactMoments:
    """Exact image mean and covariance by enumerating every joint outcome.

    ``source_pmfs[k]`` tabulates ``P(O(k) = n)`` for ``n = 0, 1, ...``;
    ``noise_pmfs[k]`` likewise for the local noise at pixel ``k``. The full
    distribution of the image vector is built by convolving in one source
    (photon count times every multinomial redistribution) or one noise pixel
    at a time. Intended for tiny systems only.
    """
    K = len(source_pmfs)
    J = psf.half_width
    p = psf.weights
    dist: dict[tuple[int, ...], float] = {(0,) * K: 1.0}

    def fold(dist, outcomes):
        new: dict[tuple[int, ...], float] = {}
        for image, pr in dist.items():
            for delta, pd in outcomes:
                if pd == 0.0:
                    continue
                key = tuple(a + b for a, b in zip(image, delta))
                new[key] = new.get(key, 0.0) + pr * pd
        return new

    for k, pmf in enumerate(source_pmfs):
        outcomes = []
        for n, pn in enumerate(pmf):
            if pn == 0.0:
                continue
            for x, px in _multinomial_outcomes(n, p):
                delta = [0] * K
                for jj, c in enumerate(x):
                    t = k + jj - J
                    if 0 <= t < K:
                        delta[t] += int(c)
                outcomes.append((tuple(delta), pn * px))
        dist = fold(dist, outcomes)

    if noise_pmfs is not None:
        for k, pmf in enumerate(noise_pmfs):
            outcomes = []
            for n, pn in enumerate(pmf):
                delta = [0] * K
                delta[k] = n
                outcomes.append((tuple(delta), pn))
            dist = fold(dist, outcomes)

    images = np.array(list(dist.keys()), dtype=np.float64)
    probs = np.array(list(dist.values()))
    mean = probs @ images
    centered = images - mean
    cov = (centered * probs[:, None]).T @ centered
    return ExactMoments(mean=mean, covariance=cov)
