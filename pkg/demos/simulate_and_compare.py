"""
Monte Carlo stack against the effective forward model
=====================================================

Draw a stack of images, reduce it to mean, variance, Z and covariance
rows, and compare with the expected images using batch-means standard
errors. Pass a sample count as the first argument (default 20000) and an
output directory as the second to also write the SVG report.
"""

import sys
import time

import numpy as np

import zimaging as zi
from zimaging.report import write_report

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
out = sys.argv[2] if len(sys.argv) > 2 else None

sc = zi.paper_scenario(0.2, n_samples=n, master_seed=7, covariance=zi.CovarianceMode.slices(48, 72, 64, 96))

t0 = time.perf_counter()
batches = zi.simulate(sc, batches=10)
print(f"{n} images in {time.perf_counter() - t0:.1f} s")

total = batches[0]
for b in batches[1:]:
    total = total.merge(b)
est = total.finalize()
se = zi.batch_standard_errors(batches)

expected = zi.effective_forward(sc.object, sc.psf, sc.noise, rows=[48, 72, 64, 96])

# %%
# Standardized residuals on the interior pixels, where edge truncation
# of the PSF plays no role.
inner = slice(12, 116)
for name in ("mean", "z"):
    t = (getattr(est, name) - getattr(expected, name)) / getattr(se, name)
    print(f"{name:4s}: rms residual {np.sqrt(np.mean(t[inner] ** 2)):.2f} SE, max {np.max(np.abs(t[inner])):.2f} SE")

# %%
# A covariance row through the point source at 64 traces the PSF.
row = est.covariance_row(64)
print("\nlag   estimate   expected")
for lag in range(-4, 5):
    print(f"{lag:3d} {row[64 + lag]:10.4f} {expected.covariance_row(64)[64 + lag]:10.4f}")

if out:
    for path in write_report(est, expected, out, n, inner):
        print(path)
