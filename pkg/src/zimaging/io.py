"""Scenario files, CSV tables and raw image stacks.

Scenario files are line oriented::

    # reference test object
    [object]
    length = 128
    background 10 0.2
    point 64 500 0.2
    extended 81 113 30 5 0.2
    pixel 3 12.5 0.0

    [psf]
    sigma = 3
    half_width = 12          # or: weights = 0.25 0.5 0.25

    [noise]
    mean = 5
    q = 0.1

    [run]
    samples = 1000
    seed = 2021
    covariance = slices=48,64,72,96

Sources add up where they overlap (means and Z quantities add); the
``background`` line fills every pixel no source touches. ``extended a b m
amp q`` sets ``m + amp sin(2 pi (k - a) / (b - a))`` on ``a..b``.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .core import CovarianceMode, NoiseModel, ObjectModel, Psf, Scenario, make_gaussian_psf
from .errors import ConfigError, InvalidArgumentError, ShapeMismatchError
from .stats import StatisticalImages

__all__ = [
    "parse_scenario",
    "format_scenario",
    "read_scenario",
    "write_scenario",
    "write_images",
    "read_images",
    "write_psf",
    "read_psf",
    "write_raw_stack",
    "stream_raw_stack",
    "read_raw_stack",
    "write_manifest",
    "read_manifest",
    "IMAGES_CSV",
    "COV_RAW_CSV",
    "COV_CORRECTED_CSV",
    "MANIFEST_JSON",
]

IMAGES_CSV = "images.csv"
COV_RAW_CSV = "cov_raw.csv"
COV_CORRECTED_CSV = "cov_corrected.csv"
MANIFEST_JSON = "manifest.json"

RAW_MAGIC = b"ZIMG"
_RAW_HEADER = struct.Struct("<4sIQ")

_SECTIONS = ("object", "psf", "noise", "run")


def _num(text: str, what: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"line {line_no}: {what} must be a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"line {line_no}: {what} must be finite")
    return value


def _int(text: str, what: str, line_no: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"line {line_no}: {what} must be an integer, got {text!r}") from None


class _Field:
    """Per-pixel list of independent contributions ``(mean, q)``."""

    def __init__(self):
        self.parts: dict[int, list[tuple[float, float]]] = {}
        self.background: tuple[float, float] | None = None

    def add(self, k: int, mean: float, q: float):
        self.parts.setdefault(k, []).append((mean, q))

    def build(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        mean = np.zeros(length)
        q = np.zeros(length)
        if self.background is not None:
            mean[:], q[:] = self.background
        for k, parts in self.parts.items():
            if not 0 <= k < length:
                raise ConfigError(f"position {k} outside [0, {length - 1}]")
            if len(parts) == 1:
                mean[k], q[k] = parts[0]
                continue
            m = math.fsum(p[0] for p in parts)
            z = math.fsum(p[0] * p[1] for p in parts)
            mean[k], q[k] = m, (z / m if m > 0 else 0.0)
        return mean, q


def parse_scenario(text: str) -> Scenario:
    section = None
    length = None
    obj, noise = _Field(), _Field()
    psf_opts: dict[str, str] = {}
    noise_opts: dict[str, str] = {}
    run: dict[str, str] = {}

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"line {line_no}: unknown section [{section}]")
            continue
        if section is None:
            raise ConfigError(f"line {line_no}: content before the first section")
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lower()
            if section == "object" and key == "length":
                length = _int(value, "length", line_no)
            elif section == "psf":
                psf_opts[key] = value
            elif section == "noise" and key in ("mean", "q"):
                noise_opts[key] = value
            elif section == "run" and key in ("samples", "seed", "covariance"):
                run[key] = value
            else:
                raise ConfigError(f"line {line_no}: unknown key {key!r} in [{section}]")
            continue

        words = line.split()
        kind, args = words[0].lower(), words[1:]
        target = obj if section == "object" else noise if section == "noise" else None
        if target is None:
            raise ConfigError(f"line {line_no}: unexpected statement in [{section}]")
        if kind == "background" and len(args) == 2:
            target.background = (_num(args[0], "flux", line_no), _num(args[1], "q", line_no))
        elif kind in ("point", "pixel") and len(args) == 3:
            target.add(_int(args[0], "position", line_no), _num(args[1], "flux", line_no),
                       _num(args[2], "q", line_no))
        elif kind == "extended" and len(args) == 5 and section == "object":
            a, b = _int(args[0], "start", line_no), _int(args[1], "stop", line_no)
            m, amp, q = (_num(x, "value", line_no) for x in args[2:])
            if b <= a:
                raise ConfigError(f"line {line_no}: extended source needs start < stop")
            for k in range(a, b + 1):
                target.add(k, m + amp * math.sin(2.0 * math.pi * (k - a) / (b - a)), q)
        else:
            raise ConfigError(f"line {line_no}: cannot parse {line!r}")

    if length is None:
        raise ConfigError("[object] must set length")
    try:
        om, oq = obj.build(length)
        if noise_opts:
            noise.background = (_num(noise_opts.get("mean", "0"), "noise mean", 0),
                                _num(noise_opts.get("q", "0"), "noise q", 0))
        nm, nq = noise.build(length)
        if "weights" in psf_opts:
            weights = [float(w) for w in psf_opts["weights"].replace(",", " ").split()]
            psf = Psf(np.array(weights))
        elif "sigma" in psf_opts:
            hw = psf_opts.get("half_width")
            psf = make_gaussian_psf(float(psf_opts["sigma"]), int(hw) if hw is not None else None)
        else:
            raise ConfigError("[psf] needs sigma or weights")
        unknown = set(psf_opts) - {"weights", "sigma", "half_width"}
        if unknown:
            raise ConfigError(f"unknown [psf] keys: {sorted(unknown)}")
        return Scenario(
            object=ObjectModel(om, oq),
            psf=psf,
            noise=NoiseModel(nm, nq),
            n_samples=int(run.get("samples", "1000")),
            master_seed=int(run.get("seed", "0")),
            covariance=CovarianceMode.parse(run.get("covariance", "full")),
        )
    except ConfigError:
        raise
    except (InvalidArgumentError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _most_common(mean: np.ndarray, q: np.ndarray) -> tuple[float, float]:
    pairs: dict[tuple[float, float], int] = {}
    for pair in zip(mean.tolist(), q.tolist()):
        pairs[pair] = pairs.get(pair, 0) + 1
    return max(pairs.items(), key=lambda kv: kv[1])[0]


def format_scenario(scenario: Scenario) -> str:
    """Text that :func:`parse_scenario` maps back to an equal scenario."""
    obj, noise, psf = scenario.object, scenario.noise, scenario.psf
    lines = ["[object]", f"length = {scenario.length}"]
    bg = _most_common(obj.mean_flux, obj.q)
    lines.append(f"background {bg[0]!r} {bg[1]!r}")
    for k, (m, q) in enumerate(zip(obj.mean_flux.tolist(), obj.q.tolist())):
        if (m, q) != bg:
            lines.append(f"pixel {k} {m!r} {q!r}")
    lines += ["", "[psf]", "weights = " + " ".join(repr(w) for w in psf.weights.tolist())]
    lines += ["", "[noise]"]
    nbg = _most_common(noise.mean, noise.q)
    lines += [f"mean = {nbg[0]!r}", f"q = {nbg[1]!r}"]
    for k, (m, q) in enumerate(zip(noise.mean.tolist(), noise.q.tolist())):
        if (m, q) != nbg:
            lines.append(f"pixel {k} {m!r} {q!r}")
    lines += [
        "",
        "[run]",
        f"samples = {scenario.n_samples}",
        f"seed = {scenario.master_seed}",
        f"covariance = {scenario.covariance}",
    ]
    return "\n".join(lines) + "\n"


def read_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def write_scenario(path, scenario: Scenario) -> None:
    Path(path).write_text(format_scenario(scenario))


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_matrix(path: Path, matrix: np.ndarray, rows: np.ndarray) -> None:
    K = matrix.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write("row," + ",".join(str(i) for i in range(K)) + "\n")
        for r, values in zip(rows.tolist(), matrix):
            fh.write(str(r) + "," + ",".join(_fmt(v) for v in values) + "\n")


def write_images(directory, images: StatisticalImages) -> list[Path]:
    """Write the per-pixel table and any covariance matrices into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = [d / IMAGES_CSV]
    with open(d / IMAGES_CSV, "w", newline="") as fh:
        fh.write("index,mean,variance,z\n")
        for k in range(images.length):
            fh.write(f"{k},{_fmt(images.mean[k])},{_fmt(images.variance[k])},{_fmt(images.z[k])}\n")
    if images.cov_raw is not None:
        _write_matrix(d / COV_RAW_CSV, images.cov_raw, images.rows)
        _write_matrix(d / COV_CORRECTED_CSV, images.cov_corrected, images.rows)
        written += [d / COV_RAW_CSV, d / COV_CORRECTED_CSV]
    return written


def _read_csv(path: Path, expect_header: str | None = None) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if expect_header is not None and header != expect_header.split(","):
            raise ConfigError(f"{path}: unexpected header {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def read_images(directory) -> StatisticalImages:
    d = Path(directory)
    _, table = _read_csv(d / IMAGES_CSV, "index,mean,variance,z")
    if not np.array_equal(table[:, 0], np.arange(table.shape[0])):
        raise ConfigError(f"{d / IMAGES_CSV}: indices must run 0..K-1")
    images = StatisticalImages(
        mean=table[:, 1].copy(), variance=table[:, 2].copy(), z=table[:, 3].copy()
    )
    manifest = d / MANIFEST_JSON
    if manifest.exists():
        images.n = read_manifest(d).get("samples")
    if (d / COV_CORRECTED_CSV).exists():
        header, corr = _read_csv(d / COV_CORRECTED_CSV)
        if len(header) - 1 != images.length:
            raise ShapeMismatchError(f"{d / COV_CORRECTED_CSV}: width does not match {IMAGES_CSV}")
        images.rows = corr[:, 0].astype(np.intp)
        images.cov_corrected = corr[:, 1:].copy()
        if (d / COV_RAW_CSV).exists():
            _, raw = _read_csv(d / COV_RAW_CSV)
            images.cov_raw = raw[:, 1:].copy()
    return images


def write_psf(path, psf: Psf) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("offset,weight\n")
        for j, w in zip(psf.offsets.tolist(), psf.weights.tolist()):
            fh.write(f"{j},{w!r}\n")


def read_psf(path) -> Psf:
    _, data = _read_csv(Path(path), "offset,weight")
    J = (data.shape[0] - 1) // 2
    if not np.array_equal(data[:, 0], np.arange(-J, J + 1)):
        raise ConfigError(f"{path}: offsets must run -J..J")
    return Psf(data[:, 1])


def write_raw_stack(path, images) -> None:
    """Little-endian u32 counts, one record of ``K`` values per image.

    The 16-byte header holds the magic ``ZIMG``, ``K`` (u32) and the image
    count (u64).
    """
    x = np.asarray(images)
    if x.ndim != 2:
        raise ShapeMismatchError("expected a (count, K) array")
    if x.size and (x.min() < 0 or x.max() >= 2**32):
        raise InvalidArgumentError("counts must fit in u32")
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, x.shape[1], x.shape[0]))
        fh.write(x.astype("<u4").tobytes())


def stream_raw_stack(path, length: int, count: int, chunks) -> None:
    """Write a raw stack from an iterable of ``(m, length)`` chunks."""
    written = 0
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, length, count))
        for chunk in chunks:
            x = np.asarray(chunk)
            if x.ndim != 2 or x.shape[1] != length:
                raise ShapeMismatchError(f"chunk of shape {x.shape} does not have {length} columns")
            if x.size and (x.min() < 0 or x.max() >= 2**32):
                raise InvalidArgumentError("counts must fit in u32")
            fh.write(x.astype("<u4").tobytes())
            written += x.shape[0]
    if written != count:
        raise ShapeMismatchError(f"header promised {count} images, wrote {written}")


def read_raw_stack(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_RAW_HEADER.size)
        if len(header) != _RAW_HEADER.size:
            raise ConfigError(f"{path}: truncated header")
        magic, K, count = _RAW_HEADER.unpack(header)
        if magic != RAW_MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        data = fh.read()
    if len(data) != 4 * K * count:
        raise ConfigError(f"{path}: expected {4 * K * count} bytes of counts, found {len(data)}")
    body = np.frombuffer(data, dtype="<u4")
    return body.reshape(count, K).astype(np.int64)


def write_manifest(directory, **fields) -> Path:
    path = Path(directory) / MANIFEST_JSON
    path.write_text(json.dumps(fields, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(directory) -> dict:
    return json.loads((Path(directory) / MANIFEST_JSON).read_text())
