"""``zimaging`` command-line front end.

Subcommands::

    zimaging simulate SCENARIO [--seed S] [--samples N] [--threads T]
                               [--cov full|off|slices=a,b] [--batches G]
                               [--raw FILE] --out DIR
    zimaging forward  SCENARIO [--effective] [--cov MODE] --out DIR
    zimaging infer    STATS_DIR --slice K [--psf-from point:K|FILE]
                               [--noise-mean V] [--half-window W] --out DIR
    zimaging report   STATS_DIR --against FORWARD_DIR --out DIR

Exit codes: 0 success, 2 usage or configuration problem, 3 I/O failure,
4 numeric failure (overflow, nothing to estimate). ``ZIMAGING_OUT`` and
``ZIMAGING_THREADS`` supply defaults for ``--out`` and ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from . import io as zio
from .core import CovarianceMode, Scenario
from .errors import (
    AccumulatorOverflowError,
    NotEstimableError,
    NotFittableError,
    NotRecoverableError,
    ZImagingError,
)
from .forward import effective_forward, expected_images
from .inference import estimate_psf_point, fit_background
from .report import write_report
from .sampler import DEFAULT_CHUNK, ImageSampler, simulate
from .stats import StatAccumulator, batch_standard_errors

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

SCENARIO_CFG = "scenario.cfg"
STDERR_DIR = "standard_errors"

_NUMERIC = (
    AccumulatorOverflowError,
    NotEstimableError,
    NotFittableError,
    NotRecoverableError,
    OverflowError,
    FloatingPointError,
)


class UsageError(ZImagingError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _out_dir(value: str | None) -> Path:
    value = value or os.environ.get("ZIMAGING_OUT")
    if not value:
        raise UsageError("no output directory: pass --out or set ZIMAGING_OUT")
    return Path(value)


def _threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("ZIMAGING_THREADS")
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"ZIMAGING_THREADS must be an integer, got {env!r}") from None


def _load_scenario(path: str, args) -> Scenario:
    scenario = zio.read_scenario(path)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        changes["n_samples"] = args.samples
    if getattr(args, "cov", None) is not None:
        changes["covariance"] = CovarianceMode.parse(args.cov)
    return scenario.replace(**changes) if changes else scenario


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario, args)
    out = _out_dir(args.out)
    threads = _threads(args.threads)
    t0 = time.perf_counter()
    parts = simulate(scenario, threads=threads, batches=args.batches)
    total = StatAccumulator(scenario.length, scenario.covariance)
    for acc in parts:
        total = total.merge(acc)
    images = total.finalize()
    elapsed = time.perf_counter() - t0

    out.mkdir(parents=True, exist_ok=True)
    zio.write_images(out, images)
    zio.write_scenario(out / SCENARIO_CFG, scenario)
    if args.batches > 1:
        zio.write_images(out / STDERR_DIR, batch_standard_errors(parts))
    if args.raw:
        sampler = ImageSampler(scenario)
        chunks = (
            sampler.sample_range(lo, min(lo + DEFAULT_CHUNK, scenario.n_samples))
            for lo in range(0, scenario.n_samples, DEFAULT_CHUNK)
        )
        zio.stream_raw_stack(args.raw, scenario.length, scenario.n_samples, chunks)
    zio.write_manifest(
        out,
        kind="simulate",
        version=__version__,
        seed=scenario.master_seed,
        samples=scenario.n_samples,
        length=scenario.length,
        covariance=str(scenario.covariance),
        threads=threads,
        batches=args.batches,
        seconds=round(elapsed, 3),
    )
    print(f"simulated {scenario.n_samples} images in {elapsed:.2f} s -> {out}")
    return EXIT_OK


def cmd_forward(args) -> int:
    scenario = _load_scenario(args.scenario, args)
    out = _out_dir(args.out)
    rows = scenario.covariance.row_indices(scenario.length)
    want_cov = scenario.covariance.kind != "off"
    build = effective_forward if args.effective else expected_images
    images = build(scenario.object, scenario.psf, scenario.noise, rows=rows, covariance=want_cov)
    out.mkdir(parents=True, exist_ok=True)
    zio.write_images(out, images)
    zio.write_scenario(out / SCENARIO_CFG, scenario)
    zio.write_manifest(
        out,
        kind="forward",
        version=__version__,
        effective=bool(args.effective),
        length=scenario.length,
        covariance=str(scenario.covariance),
    )
    print(f"wrote {'effective' if args.effective else 'ideal'} expected images -> {out}")
    return EXIT_OK


def _stats_scenario(stats_dir: Path) -> Scenario | None:
    path = stats_dir / SCENARIO_CFG
    return zio.read_scenario(path) if path.exists() else None


def cmd_infer(args) -> int:
    stats_dir = Path(args.stats_dir)
    images = zio.read_images(stats_dir)
    scenario = _stats_scenario(stats_dir)
    out = _out_dir(args.out)

    half_width = args.psf_half_width
    if half_width is None and scenario is not None:
        half_width = scenario.psf.half_width

    source = args.psf_from
    if source is None:
        if scenario is None:
            raise UsageError(f"--psf-from is required when {SCENARIO_CFG} is absent")
        psf = scenario.psf
        psf_origin = "scenario"
    elif source.startswith("point:"):
        if half_width is None:
            raise UsageError("--psf-half-width is required to estimate a PSF from a point source")
        try:
            k_point = int(source.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad point position in {source!r}") from None
        est = estimate_psf_point(images, k_point, half_width, noise_z=args.noise_z)
        psf = est.psf
        psf_origin = source
    else:
        psf = zio.read_psf(source)
        psf_origin = str(source)

    noise_mean = args.noise_mean
    if noise_mean is None:
        if scenario is None:
            raise UsageError(f"--noise-mean is required when {SCENARIO_CFG} is absent")
        noise_mean = float(scenario.noise.mean[args.slice])

    report = fit_background(images, args.slice, psf, noise_mean, args.half_window)
    summary = report.summary()
    summary.update(psf_from=psf_origin, noise_mean=noise_mean, samples=images.n)

    out.mkdir(parents=True, exist_ok=True)
    (out / "fit_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    with open(out / "fit_report.csv", "w", newline="") as fh:
        fh.write("field,value\n")
        for key in ("center", "z_b", "z_n", "o_b", "q_b", "residual_rms"):
            fh.write(f"{key},{summary[key]!r}\n")
    with open(out / "fit_residuals.csv", "w", newline="") as fh:
        fh.write("lag,observed,fitted\n")
        for lag, o, f in zip(report.lags.tolist(), report.observed.tolist(), report.fitted.tolist()):
            fh.write(f"{lag},{o!r},{f!r}\n")
    zio.write_psf(out / "psf.csv", psf)
    print(
        f"row {report.center}: Z_B={report.z_b:.4g} Z_N={report.z_n:.4g} "
        f"O_B={report.o_b:.4g} Q_B={report.q_b:.4g}"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    stats_dir = Path(args.stats_dir)
    est = zio.read_images(stats_dir)
    expected = zio.read_images(args.against)
    if est.length != expected.length:
        raise UsageError(
            f"image length mismatch: {stats_dir} has {est.length}, {args.against} has {expected.length}"
        )
    if est.n is None:
        raise UsageError(f"{stats_dir} has no manifest with a sample count")
    scenario = _stats_scenario(stats_dir)
    J = scenario.psf.half_width if scenario is not None else 0
    written = write_report(est, expected, _out_dir(args.out), est.n, slice(J, est.length - J))
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zimaging", description="Statistical imaging simulator and analyser.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo stack -> statistical images")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--cov", help="full, off or slices=a,b,...")
    s.add_argument("--batches", type=int, default=1, help="batches for batch-means standard errors")
    s.add_argument("--raw", help="also dump the raw image stack to this file")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("forward", help="expected statistical images")
    f.add_argument("scenario")
    f.add_argument("--effective", action="store_true", help="use the sampler's effective moments")
    f.add_argument("--cov")
    f.add_argument("--out")
    f.set_defaults(func=cmd_forward)

    i = sub.add_parser("infer", help="background and noise fit from a covariance row")
    i.add_argument("stats_dir")
    i.add_argument("--slice", type=int, required=True)
    i.add_argument("--psf-from", help="point:K or a PSF CSV (default: the run's scenario PSF)")
    i.add_argument("--psf-half-width", type=int)
    i.add_argument("--noise-mean", type=float)
    i.add_argument("--noise-z", type=float, default=0.0, help="noise Z removed before point PSF estimation")
    i.add_argument("--half-window", type=int)
    i.add_argument("--out")
    i.set_defaults(func=cmd_infer)

    r = sub.add_parser("report", help="SVG plots and residual tables")
    r.add_argument("stats_dir")
    r.add_argument("--against", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _NUMERIC as exc:
        print(f"zimaging: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ZImagingError, ValueError) as exc:
        print(f"zimaging: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"zimaging: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
