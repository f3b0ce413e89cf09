"""Compiled inner loop for photon redistribution."""

import numba as nb
import numpy as np


def alias_table(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walker/Vose alias table for a discrete distribution."""
    w = np.asarray(weights, dtype=np.float64)
    n = w.size
    scaled = w * (n / w.sum())
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    return prob, alias


@nb.njit(cache=True, nogil=True)
def spread_photons(counts, uniforms, prob, alias, out):
    """Send ``counts[k]`` photons from position ``k`` through the kernel.

    Each photon consumes one uniform: its integer part (after scaling by
    the kernel width) picks an alias column, the fractional part decides
    between the column and its alias. Photons leaving ``[0, K)`` are lost.
    """
    K = out.shape[0]
    W = prob.shape[0]
    J = (W - 1) // 2
    c = 0
    for k in range(counts.shape[0]):
        for _ in range(counts[k]):
            x = uniforms[c] * W
            c += 1
            col = int(x)
            if col >= W:
                col = W - 1
            if x - col >= prob[col]:
                col = alias[col]
            t = k + col - J
            if t >= 0 and t < K:
                out[t] += 1
    return c


@nb.njit(cache=True, nogil=True)
def discretize(s, mean, alpha, passthrough, u, out):
    """Compiled twin of ``sampler.discretize_counts`` with precomputed alpha."""
    total = 0
    for i in range(s.shape[0]):
        if passthrough[i]:
            v = s[i]
        else:
            x = alpha[i] * (s[i] - mean[i]) + mean[i]
            if x < 0.0:
                x = 0.0
            lo = np.floor(x)
            v = int(lo)
            if u[i] < x - lo:
                v += 1
        out[i] = v
        total += v
    return total
