"""Two-stage Monte Carlo generation of photon-count images.

Every image owns a random stream keyed by ``(master_seed, image_index)``
(a Philox counter-based generator), so any image can be regenerated in
isolation and a stack gives the same statistics however it is split
across workers.

Within an image the draws happen in a fixed order:

1. Poisson counts for every object position, then every noise pixel.
2. One uniform per position / pixel for the integer rounding step.
3. One uniform per object photon for its landing offset (skipped for a
   delta PSF).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels
from .core import Psf, Scenario
from .errors import InvalidArgumentError
from .stats import StatAccumulator

__all__ = [
    "rng_stream",
    "discretize_counts",
    "sample_source_counts",
    "sample_multinomial",
    "ImageSampler",
    "sample_image",
    "sample_batch",
    "simulate",
    "partition",
]

DEFAULT_CHUNK = 2048


def rng_stream(master_seed: int, image_index: int) -> np.random.Generator:
    key = np.array([master_seed, image_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def discretize_counts(s, mean, q, u) -> np.ndarray:
    """Rescale Poisson draws to Mandel Q and round to integers.

    ``x = sqrt(1 + q) * (s - mean) + mean`` is clamped at 0 and rounded
    down or up with probability given by its fractional part, using the
    uniforms ``u``. That keeps the mean of ``x`` exactly. Positions with
    ``q == 0`` pass ``s`` through untouched.
    """
    s = np.asarray(s, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    x = np.sqrt(1.0 + q) * (s - mean) + mean
    x = np.maximum(x, 0.0)
    lo = np.floor(x)
    out = lo + (np.asarray(u) < (x - lo))
    out = np.where(q == 0, s, out)
    return out.astype(np.int64)


def sample_source_counts(mean: float, q: float, rng: np.random.Generator) -> int:
    """One photon count with the given mean and (approximately) Mandel Q."""
    if mean < 0:
        raise InvalidArgumentError("mean must be non-negative")
    if q < -1:
        raise InvalidArgumentError(f"q must be >= -1, got {q}")
    if mean == 0:
        return 0
    s = rng.poisson(mean)
    u = rng.random()
    return int(discretize_counts(s, mean, q, u))


def sample_multinomial(n: int, psf: Psf, rng: np.random.Generator) -> np.ndarray:
    """Split ``n`` photons over the ``2J + 1`` kernel offsets."""
    if n < 0:
        raise InvalidArgumentError("n must be non-negative")
    # numpy draws this as sequential conditional binomials
    return rng.multinomial(int(n), psf.weights).astype(np.int64)


class ImageSampler:
    """Precomputed tables for drawing images of one scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        obj, noise = scenario.object, scenario.noise
        K = scenario.length
        self._means = np.concatenate([obj.mean_flux, noise.mean])
        self._q = np.concatenate([obj.q, noise.q])
        self._alpha = np.sqrt(1.0 + self._q)
        self._passthrough = self._q == 0
        self._prob, self._alias = _kernels.alias_table(scenario.psf.weights)
        self._K = K

    def sample(self, image_index: int, out: np.ndarray | None = None) -> np.ndarray:
        K = self._K
        if out is None:
            out = np.zeros(K, dtype=np.int64)
        rng = rng_stream(self.scenario.master_seed, image_index)
        s = rng.poisson(self._means)
        counts = np.empty(2 * K, dtype=np.int64)
        _kernels.discretize(s, self._means, self._alpha, self._passthrough, rng.random(2 * K), counts)
        src = counts[:K]
        out[:] = counts[K:]
        if self._prob.size == 1:
            # a delta PSF leaves every photon where it was emitted
            out += src
            return out
        photons = rng.random(int(src.sum()))
        _kernels.spread_photons(src, photons, self._prob, self._alias, out)
        return out

    def sample_range(self, start: int, stop: int) -> np.ndarray:
        images = np.empty((stop - start, self._K), dtype=np.int64)
        for row, i in enumerate(range(start, stop)):
            self.sample(i, images[row])
        return images


def sample_image(scenario: Scenario, image_index: int) -> np.ndarray:
    """Image ``image_index`` of the scenario's stack (integer counts)."""
    return ImageSampler(scenario).sample(image_index)


def sample_batch(
    scenario: Scenario,
    start: int,
    stop: int,
    sink: StatAccumulator | None = None,
    chunk: int = DEFAULT_CHUNK,
    sampler: ImageSampler | None = None,
) -> StatAccumulator:
    """Generate images ``start..stop-1`` and accumulate them into ``sink``."""
    if not 0 <= start <= stop <= scenario.n_samples:
        raise InvalidArgumentError(f"bad image range [{start}, {stop})")
    if sink is None:
        sink = StatAccumulator(scenario.length, scenario.covariance)
    sampler = sampler or ImageSampler(scenario)
    for c0 in range(start, stop, chunk):
        sink.add_stack(sampler.sample_range(c0, min(c0 + chunk, stop)))
    return sink


def partition(n: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into ``parts`` contiguous near-equal ranges."""
    parts = max(1, min(int(parts), n)) if n > 0 else 1
    edges = [n * i // parts for i in range(parts + 1)]
    return list(zip(edges[:-1], edges[1:]))


def simulate(
    scenario: Scenario,
    threads: int = 1,
    batches: int = 1,
) -> list[StatAccumulator]:
    """Accumulate the scenario's full stack as ``batches`` equal parts.

    Returns one accumulator per batch (merge them for the full-stack
    statistics; keep them apart for batch-means standard errors). Work is
    spread over ``threads`` workers; the result does not depend on it.
    """
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")
    ranges = partition(scenario.n_samples, batches)
    sampler = ImageSampler(scenario)

    def run(r):
        return sample_batch(scenario, r[0], r[1], sampler=sampler)

    if threads == 1:
        return [run(r) for r in ranges]
    # split each batch further so all workers stay busy
    jobs = []
    per = max(1, math.ceil(threads / len(ranges)))
    for b, (lo, hi) in enumerate(ranges):
        for s0, s1 in partition(hi - lo, per):
            jobs.append((b, lo + s0, lo + s1))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda j: (j[0], run(j[1:])), jobs))
    out = [StatAccumulator(scenario.length, scenario.covariance) for _ in ranges]
    for b, acc in parts:
        out[b] = out[b].merge(acc)
    return out
