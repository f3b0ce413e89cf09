"""Static SVG figures and residual tables comparing estimates to expectations."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import STANDARD_SLICES  # noqa: E402
from .errors import InvalidArgumentError, ShapeMismatchError  # noqa: E402
from .stats import StatisticalImages  # noqa: E402

__all__ = ["standardized_residuals", "residual_summary", "write_report"]

SLICE_LABELS = "ABCD"


def standardized_residuals(est: StatisticalImages, expected: StatisticalImages, n: int) -> dict:
    """Per-pixel ``(estimate - expected) / SE`` for the mean and Z images.

    The mean SE is ``sqrt(var / n)``. The Z SE uses the normal-theory
    approximation ``var * sqrt(2 / (n - 1))``; it ignores excess kurtosis
    and is meant for screening, not for calibrated tests.
    """
    if est.length != expected.length:
        raise ShapeMismatchError("estimate and expectation differ in length")
    if n < 2:
        raise InvalidArgumentError("need n >= 2")
    var = np.maximum(expected.variance, 1e-300)
    mean_se = np.sqrt(var / n)
    z_se = var * np.sqrt(2.0 / (n - 1))
    return {
        "mean": (est.mean - expected.mean) / mean_se,
        "z": (est.z - expected.z) / z_se,
    }


def residual_summary(residuals: dict, interior: slice = slice(None)) -> list[dict]:
    rows = []
    for name, r in residuals.items():
        r = r[interior]
        rows.append(
            {
                "quantity": name,
                "rms": float(np.sqrt(np.mean(r * r))),
                "max_abs": float(np.max(np.abs(r))),
                "frac_within_5": float(np.mean(np.abs(r) < 5)),
            }
        )
    return rows


def _plot_mean(est, expected, path):
    k = np.arange(est.length)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(k, expected.mean, "k-", lw=1.2, label="expected (convolution)")
    ax.step(k, est.mean, where="mid", color="tab:blue", lw=0.8, label="mean image")
    ax.set_xlabel("pixel")
    ax.set_ylabel("counts")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_variance_z(est, expected, path):
    k = np.arange(est.length)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    top.plot(k, expected.z, "k-", lw=1.2, label="expected Z")
    top.step(k, est.z, where="mid", color="tab:red", lw=0.8, label="Z image")
    top.set_ylabel("Z")
    top.legend()
    bottom.plot(k, expected.variance, "k-", lw=1.2, label="expected variance")
    bottom.step(k, est.variance, where="mid", color="tab:green", lw=0.8, label="variance image")
    bottom.set_xlabel("pixel")
    bottom.set_ylabel("variance")
    bottom.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _available_rows(images: StatisticalImages) -> set[int]:
    if images.cov_corrected is None:
        return set()
    return {int(r) for r in images.rows}


def _plot_slices(est, expected, positions, path):
    fig, axes = plt.subplots(1, len(positions), figsize=(3.2 * len(positions), 3), squeeze=False)
    k = np.arange(est.length)
    for ax, (label, pos) in zip(axes[0], positions):
        ax.step(k, est.covariance_row(pos), where="mid", color="tab:purple", lw=0.8, label="estimate")
        if pos in _available_rows(expected):
            ax.plot(k, expected.covariance_row(pos), "k-", lw=1.0, label="expected")
        ax.set_title(f"{label}: row {pos}")
        ax.set_xlim(max(0, pos - 30), min(est.length - 1, pos + 30))
        ax.set_xlabel("pixel")
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_report(
    est: StatisticalImages,
    expected: StatisticalImages,
    out_dir,
    n: int,
    interior: slice = slice(None),
) -> list[Path]:
    """Write SVG figures, ``residuals.csv`` and ``residual_summary.csv``."""
    if est.length != expected.length:
        raise ShapeMismatchError(
            f"estimate has {est.length} pixels, expectation has {expected.length}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "mean.svg", out / "variance_z.svg"]
    _plot_mean(est, expected, written[0])
    _plot_variance_z(est, expected, written[1])

    rows = _available_rows(est)
    positions = [(lab, pos) for lab, pos in zip(SLICE_LABELS, STANDARD_SLICES) if pos in rows]
    if not positions and rows:
        positions = [(str(i + 1), r) for i, r in enumerate(sorted(rows)[:4])]
    if positions:
        written.append(out / "covariance_slices.svg")
        _plot_slices(est, expected, positions, written[-1])

    res = standardized_residuals(est, expected, n)
    with open(out / "residuals.csv", "w") as fh:
        fh.write("index,mean_resid,z_resid\n")
        for k in range(est.length):
            fh.write(f"{k},{res['mean'][k]!r},{res['z'][k]!r}\n")
    with open(out / "residual_summary.csv", "w") as fh:
        fh.write("quantity,rms,max_abs,frac_within_5\n")
        for row in residual_summary(res, interior):
            fh.write(f"{row['quantity']},{row['rms']!r},{row['max_abs']!r},{row['frac_within_5']!r}\n")
    written += [out / "residuals.csv", out / "residual_summary.csv"]
    return written
