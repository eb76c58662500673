"""Command-line interface.

Subcommands::

    gcdenoise inject   IN OUT --density 0.3 [--salt-fraction 0.5] [--seed 0]
    gcdenoise detect   IN --mask-pgm MASK.pgm [--mask-csv MASK.csv]
    gcdenoise denoise  IN OUT [--auto-config] [--config cfg.json] [tuning flags]
    gcdenoise evaluate REF TEST
    gcdenoise sweep    IN OUT.csv --densities 0.1,0.3 --patch-sizes 3,5 --clusters 50,100

Exit status is 0 on success, 2 for usage, configuration and file errors,
and 1 for failures while processing.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import baselines, gmm, imgio, metrics, noise, pipeline, switching

SWEEP_HEADER = ["density", "L", "K", "trial", "seed", "method", "psnr_db", "ssim", "mse", "runtime_ms", "status"]
METHOD = "gmm_switching"
MEDIAN_WINDOW = 3


class UsageError(Exception):
    """Bad flag values; reported with exit status 2."""


# flag name -> (DenoiseConfig path, type)
_TUNING_FLAGS = {
    "patch_size": ("patch_size", int),
    "clusters": ("cluster_count", int),
    "t_p": ("t_p", int),
    "t_s": ("t_s", int),
    "min_cluster_size": ("min_cluster_size", int),
    "beta": ("em.beta", float),
    "max_iters": ("em.max_iters", int),
    "rel_tol": ("em.rel_tol", float),
    "ridge": ("em.ridge", float),
    "seed": ("em.seed", int),
    "covariance": ("em.covariance_type", str),
    "sigma_n": ("filter.sigma_n", float),
    "n_min": ("filter.n_min", int),
    "n_max": ("filter.n_max", int),
}

_CHECKS = {
    "patch_size": (lambda v: v >= 3 and v % 2 == 1, "must be an odd integer >= 3"),
    "clusters": (lambda v: v >= 1, "must be >= 1"),
    "t_p": (lambda v: 0 <= v <= 254, "must be in [0, 254]"),
    "t_s": (lambda v: 1 <= v <= 255, "must be in [1, 255]"),
    "min_cluster_size": (lambda v: v >= 1, "must be >= 1"),
    "beta": (lambda v: v > 0, "must be > 0"),
    "max_iters": (lambda v: v >= 1, "must be >= 1"),
    "rel_tol": (lambda v: v > 0, "must be > 0"),
    "ridge": (lambda v: v >= 0, "must be >= 0"),
    "sigma_n": (lambda v: v > 1, "must be > 1"),
    "n_min": (lambda v: v >= 1, "must be >= 1"),
    "n_max": (lambda v: v >= 1, "must be >= 1"),
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_tuning_flags(p: argparse.ArgumentParser, exclude=()) -> None:
    g = p.add_argument_group("tuning (override --config and --auto-config)")
    for name, (_, typ) in _TUNING_FLAGS.items():
        if name in exclude:
            continue
        kwargs = {"type": typ, "default": None}
        if name == "covariance":
            kwargs["choices"] = ["full", "diag"]
        g.add_argument(_flag(name), dest=name, **kwargs)
    p.add_argument("--config", help="JSON file with DenoiseConfig fields")


def _set_path(data: dict, path: str, value) -> None:
    head, _, rest = path.partition(".")
    if rest:
        data.setdefault(head, {})[rest] = value
    else:
        data[head] = value


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def build_config(args, img=None) -> pipeline.DenoiseConfig:
    """Resolve a config from auto-config, then ``--config``, then explicit flags."""
    data = pipeline.DenoiseConfig().to_dict()
    if getattr(args, "auto_config", False):
        if img is None:
            raise UsageError("--auto-config needs an input image")
        t_p = args.t_p if args.t_p is not None else 0
        t_s = args.t_s if args.t_s is not None else 255
        density = pipeline.estimated_density(img, t_p, t_s)
        data = pipeline.default_config_for_density(density).to_dict()
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = _merge(data, json.load(fh))
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config {args.config}: invalid JSON ({exc})") from exc

    for name, (path, _) in _TUNING_FLAGS.items():
        value = getattr(args, name, None)
        if value is None:
            continue
        check = _CHECKS.get(name)
        if check and not check[0](value):
            raise UsageError(f"{_flag(name)} {check[1]}, got {value}")
        _set_path(data, path, value)
    if data["patch_size"] > data.get("max_patch_size", 11):
        data["max_patch_size"] = data["patch_size"]
    try:
        return pipeline.DenoiseConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def cmd_inject(args) -> int:
    img = imgio.load(args.input)
    params = noise.NoiseParams(args.density, args.salt_fraction, args.seed)
    noisy, mask = noise.inject(img, params)
    imgio.save(args.output, noisy)
    mask_csv = args.mask_csv or args.output + ".mask.csv"
    with open(mask_csv, "w") as fh:
        fh.write(mask.to_csv())
    if args.mask_pgm:
        imgio.save(args.mask_pgm, mask.to_pgm_array())
    print(f"realized_density={mask.count / mask.kind.size:.6f}")
    return 0


def cmd_detect(args) -> int:
    img = imgio.load(args.input)
    if args.auto_thresholds:
        t_p, t_s = noise.estimate_thresholds(img)
    else:
        t_p, t_s = args.t_p, args.t_s
    try:
        mask = noise.detect(img, t_p, t_s)
    except ValueError as exc:
        raise UsageError(f"--t-p/--t-s: {exc}") from exc
    imgio.save(args.mask_pgm, mask.to_pgm_array())
    if args.mask_csv:
        with open(args.mask_csv, "w") as fh:
            fh.write(mask.to_csv())
    print(f"t_p={t_p}")
    print(f"t_s={t_s}")
    print(f"flagged={mask.count}")
    return 0


def cmd_denoise(args) -> int:
    img = imgio.load(args.input)
    config = build_config(args, img)
    model = gmm.load_model(args.load_model) if args.load_model else None
    out, stats = pipeline.denoise(img, config, model=model)
    imgio.save(args.output, out)
    if args.save_model and stats.model is not None:
        gmm.save_model(args.save_model, stats.model)
    for line in stats.summary_lines():
        print(line)
    if args.stats_json:
        with open(args.stats_json, "w") as fh:
            json.dump(stats.to_dict(), fh, indent=2)
    return 0


def cmd_evaluate(args) -> int:
    ref = imgio.load(args.reference)
    test = imgio.load(args.test)
    if ref.shape != test.shape:
        print(f"error: image dimensions differ: {ref.shape} vs {test.shape}", file=sys.stderr)
        return 1
    print(metrics.evaluate(ref, test).csv())
    return 0


@dataclass(frozen=True)
class SweepSpec:
    densities: tuple
    patch_sizes: tuple
    cluster_counts: tuple
    trials_per_cell: int = 1
    seed_base: int = 0

    def __post_init__(self):
        for name in ("densities", "patch_sizes", "cluster_counts"):
            if not getattr(self, name):
                raise ValueError(f"sweep {name} must be non-empty")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")
        for d in self.densities:
            if not 0 <= d <= 1:
                raise ValueError(f"density {d} outside [0, 1]")
        for size in self.patch_sizes:
            if size < 3 or size % 2 == 0:
                raise ValueError(f"patch size {size} is not an odd integer >= 3")

    def seed(self, density_index: int, trial: int) -> int:
        return self.seed_base + 1000 * density_index + trial


def _row(density, size, k, trial, seed, method, report=None, runtime_ms=0.0, status="ok"):
    if report is None:
        quality = ["", "", ""]
    else:
        quality = [metrics.format_psnr(report.psnr_db), f"{report.ssim:.6f}", f"{report.mse:.10g}"]
    return [f"{density:g}", "" if size is None else str(size), "" if k is None else str(k),
            str(trial), str(seed), method, *quality, f"{runtime_ms:.1f}", status]


def _timed(fn):
    t0 = time.perf_counter()
    result = fn()
    return result, (time.perf_counter() - t0) * 1000.0


def run_sweep_cell(img: np.ndarray, density: float, trial: int, seed: int,
                   spec: SweepSpec, base: pipeline.DenoiseConfig) -> list:
    """All rows for one (density, trial): two baselines, then every (L, K)."""
    rows = []
    noisy, _ = noise.inject(img, noise.NoiseParams(density, 0.5, seed))
    comparators = [
        ("median", MEDIAN_WINDOW, lambda: baselines.median_filter(noisy, MEDIAN_WINDOW)),
        ("amf", baselines.AmfSettings().max_window, lambda: baselines.adaptive_median_filter(noisy)),
    ]
    for name, window, fn in comparators:
        try:
            out, ms = _timed(fn)
            rows.append(_row(density, window, None, trial, seed, name, metrics.evaluate(img, out), ms))
        except Exception as exc:  # a failed cell must not stop the sweep
            rows.append(_row(density, window, None, trial, seed, name, status=f"error:{type(exc).__name__}"))
    for size in spec.patch_sizes:
        for k in spec.cluster_counts:
            try:
                cfg = replace(base, patch_size=size, cluster_count=k,
                              max_patch_size=max(base.max_patch_size, size),
                              em=replace(base.em, seed=seed))
                (out, _), ms = _timed(lambda: pipeline.denoise(noisy, cfg))
                rows.append(_row(density, size, k, trial, seed, METHOD, metrics.evaluate(img, out), ms))
            except Exception as exc:
                rows.append(_row(density, size, k, trial, seed, METHOD, status=f"error:{type(exc).__name__}"))
    return rows


def _cell(job):
    return run_sweep_cell(*job)


def run_sweep(img, spec: SweepSpec, base: pipeline.DenoiseConfig, workers: int = 1) -> list:
    jobs = [(img, density, trial, spec.seed(di, trial), spec, base)
            for di, density in enumerate(spec.densities)
            for trial in range(spec.trials_per_cell)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell, jobs))
    else:
        cells = [_cell(job) for job in jobs]
    return [SWEEP_HEADER] + [row for cell in cells for row in cell]


def sweep_csv(rows: list) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def cmd_sweep(args) -> int:
    img = imgio.load(args.input)
    data = {}
    if args.spec:
        with open(args.spec) as fh:
            data = json.load(fh)
    for key, value in (("densities", args.densities), ("patch_sizes", args.patch_sizes),
                       ("cluster_counts", args.cluster_counts), ("trials_per_cell", args.trials),
                       ("seed_base", args.seed_base)):
        if value is not None:
            data[key] = value
    for key in ("densities", "patch_sizes", "cluster_counts"):
        data[key] = tuple(data.get(key, ()))
    try:
        spec = SweepSpec(**data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid sweep spec: {exc}") from exc
    base = build_config(args)
    rows = run_sweep(img, spec, base, workers=args.workers)
    with open(args.output, "w", newline="") as fh:
        fh.write(sweep_csv(rows))
    print(f"rows={len(rows) - 1}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcdenoise", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="add salt-and-pepper noise")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--salt-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-csv", help="ground-truth sidecar (default: OUTPUT.mask.csv)")
    p.add_argument("--mask-pgm", help="also write the mask as a 0/255 PGM")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("detect", help="flag suspected noise pixels")
    p.add_argument("input")
    p.add_argument("--mask-pgm", required=True)
    p.add_argument("--mask-csv")
    p.add_argument("--t-p", type=int, default=0)
    p.add_argument("--t-s", type=int, default=255)
    p.add_argument("--auto-thresholds", action="store_true", help="histogram-based threshold guess")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("denoise", help="remove salt-and-pepper noise")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--auto-config", action="store_true",
                   help="pick patch size and cluster count from the detected noise density")
    p.add_argument("--stats-json")
    p.add_argument("--save-model", help="write the fitted mixture (.npz)")
    p.add_argument("--load-model", help="reuse a previously fitted mixture (.npz)")
    _add_tuning_flags(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", help="print psnr_db,ssim,mse")
    p.add_argument("reference")
    p.add_argument("test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="benchmark over densities, patch sizes and cluster counts")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--spec", help="JSON file with SweepSpec fields")
    p.add_argument("--densities", type=_floats)
    p.add_argument("--patch-sizes", type=_ints)
    p.add_argument("--clusters", type=_ints, dest="cluster_counts")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed-base", type=int)
    p.add_argument("--workers", type=int, default=1)
    _add_tuning_flags(p, exclude=("patch_size", "clusters", "seed"))
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (imgio.PgmError, ValueError, gmm.NumericalError, switching.PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
