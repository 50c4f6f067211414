"""Command-line pipeline: simulate -> reconstruct -> evaluate -> benchmark.

Configuration comes from defaults, overridden by an optional JSON config
file (``--config``), overridden by command-line flags.  Configs are
schema-validated before any computation; unknown keys are rejected with
their path.  All randomness flows from explicit seeds, so identical
commands produce identical artifacts.  ``TOMOFORGE_THREADS`` caps
benchmark worker parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import pathlib
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from tomoforge import backend
from tomoforge.fbp import FilterSpec, fbp_reconstruct
from tomoforge.fileio import FileFormatError, read_raw, write_pgm, write_raw
from tomoforge.geometry import FanBeamGeometry
from tomoforge.metrics import psnr, ssim
from tomoforge.phantom import shepp_logan
from tomoforge.recon import ReconConfig, reconstruct
from tomoforge.simulate import INTENSITY_PRESETS, counts_to_sinogram, simulate_counts
from tomoforge.tv import TvConfig, tv_reconstruct

EVAL_HEADER = ("method", "intensity", "psnr_db", "ssim")


class ConfigError(ValueError):
    pass


# Schema: block -> key -> (expected type(s), default).  None defaults mean
# "derive later"; the geometry block feeds FanBeamGeometry.create.
_SCHEMA = {
    "geometry": {
        "num_angles": (int, 360),
        "num_bins": (int, None),
        "source_axis_dist": ((int, float), 500.0),
        "axis_detector_dist": ((int, float), 500.0),
        "pixel_size": ((int, float), 0.5),
        "detector_width": ((int, float, type(None)), None),
        "angle_range": ((int, float), 2.0 * math.pi),
    },
    "simulator": {
        "phantom": (str, "shepp-logan"),
        "size": (int, 128),
        "intensity": ((int, float, type(None)), None),
        "seed": (int, 7),
        "background": ((int, float), 0.0),
    },
    "fbp": {
        "window": (str, "hann"),
        "frequency_scaling": ((int, float), 0.8),
    },
    "tv": {
        "lambda": ((int, float), 0.1),
        "iterations": (int, 200),
        "step_ratio": ((int, float), 1.0),
    },
    "proposed": {
        "iterations": (int, 2000),
        "lr": ((int, float), 1e-3),
        "net_seed": (int, 1234),
        "checkpoint_mode": (str, "auto"),
        "curve_stride": (int, 1),
        "optimizer": (str, "adamw"),
        "weight_decay": ((int, float), 1e-2),
    },
    "benchmark": {
        "intensities": (list, list(INTENSITY_PRESETS)),
        "methods": (list, ["fbp", "tv", "proposed"]),
        "phantoms": (list, [{"name": "shepp-logan", "size": 128}]),
    },
}


def default_config():
    return {block: {k: v for k, (_, v) in keys.items()}
            for block, keys in _SCHEMA.items()}


def merge_config(base, override, path=""):
    """Validate ``override`` against the schema and merge into ``base``."""
    if not isinstance(override, dict):
        raise ConfigError(f"config{path or ' root'} must be an object")
    for block, content in override.items():
        if block not in _SCHEMA:
            raise ConfigError(f"unknown config section {path}{block!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"config section {path}{block} must be an object")
        for key, value in content.items():
            if key not in _SCHEMA[block]:
                raise ConfigError(f"unknown config key {block}.{key}")
            expected = _SCHEMA[block][key][0]
            if not isinstance(value, expected) or isinstance(value, bool):
                raise ConfigError(
                    f"config key {block}.{key} has invalid type "
                    f"{type(value).__name__}: {value!r}")
            base[block][key] = value
    return base


def load_config(args):
    cfg = default_config()
    if getattr(args, "config", None):
        path = pathlib.Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        merge_config(cfg, raw)
    return cfg


def _apply_flag(cfg, block, key, value):
    if value is not None:
        cfg[block][key] = value


def build_geometry(cfg, size):
    g = cfg["geometry"]
    num_bins = g["num_bins"] if g["num_bins"] is not None else 4 * size
    return FanBeamGeometry.create(
        g["num_angles"], num_bins, g["source_axis_dist"],
        g["axis_detector_dist"], (size, size), g["pixel_size"],
        g["detector_width"], g["angle_range"])


def make_phantom(name, size):
    if name == "shepp-logan":
        return shepp_logan(size)
    raise ConfigError(f"unknown phantom {name!r} (supported: shepp-logan)")


def _filter_spec(cfg):
    return FilterSpec(cfg["fbp"]["window"], cfg["fbp"]["frequency_scaling"])


# ---------------------------------------------------------------------------
# simulate


def run_simulate(cfg, out_dir):
    sim = cfg["simulator"]
    if sim["intensity"] is None:
        raise ConfigError("simulator.intensity is required (e.g. 1e4)")
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geom = build_geometry(cfg, sim["size"])
    img = make_phantom(sim["phantom"], sim["size"])
    counts = simulate_counts(img, geom, sim["intensity"], sim["background"],
                             seed=sim["seed"])
    sino = counts_to_sinogram(counts)
    meta = {"geometry": geom.to_dict(), "intensity": float(sim["intensity"]),
            "seed": sim["seed"], "background": float(sim["background"])}
    files = [
        write_raw(out / "ground_truth.raw", img,
                  description=f"{sim['phantom']} phantom, normalized",
                  extra={"geometry": geom.to_dict()}),
        write_raw(out / "counts.raw", counts.counts,
                  description="simulated photon counts", extra=meta),
        write_raw(out / "sinogram.raw", sino,
                  description="post-log line integrals", extra=meta),
    ]
    (out / "geometry.json").write_text(geom.to_json() + "\n")
    return files


# ---------------------------------------------------------------------------
# reconstruct


def _load_sinogram(path):
    sino, meta = read_raw(path)
    if "geometry" not in meta:
        raise ConfigError(f"sinogram sidecar of {path} lacks a geometry block")
    geom = FanBeamGeometry.from_dict(meta["geometry"])
    return sino.astype(np.float64), geom, meta


def _write_curves(path, columns):
    names = list(columns)
    rows = zip(*(columns[k] for k in names))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_reconstruct(cfg, method, sino_path, out_dir, gt_path=None, pgm=False):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sino, geom, _ = _load_sinogram(sino_path)
    spec = _filter_spec(cfg)
    gt = None
    if gt_path:
        gt_arr, _ = read_raw(gt_path)
        gt = gt_arr.astype(np.float64)

    t0 = time.perf_counter()
    curves = None
    if method == "fbp":
        image = fbp_reconstruct(sino, geom, spec)
        iterations = 0
    elif method == "tv":
        tv = cfg["tv"]
        init = fbp_reconstruct(sino, geom, spec)
        image, objective = tv_reconstruct(
            sino, geom,
            TvConfig(tv["lambda"], tv["iterations"], tv["step_ratio"]),
            init, return_curve=True)
        iterations = tv["iterations"]
        curves = {"iteration": np.arange(len(objective)), "objective": objective}
    elif method == "proposed":
        p = cfg["proposed"]
        mode = p["checkpoint_mode"]
        if mode == "auto":
            mode = "best_psnr" if gt is not None else "best_loss"
        rcfg = ReconConfig(p["iterations"], p["lr"], p["net_seed"], mode,
                           p["curve_stride"], p["optimizer"], p["weight_decay"])
        report = reconstruct(sino, geom, spec, rcfg, ground_truth=gt)
        image = report.final_image
        iterations = p["iterations"]
        curves = {"iteration": report.recorded_iterations,
                  "loss": report.loss_curve}
        if report.psnr_curve is not None:
            curves["psnr"] = report.psnr_curve
            curves["ssim"] = report.ssim_curve
    else:
        raise ConfigError(f"unknown method {method!r}")
    elapsed = time.perf_counter() - t0

    files = [write_raw(out / "recon.raw", image,
                       description=f"{method} reconstruction",
                       extra={"geometry": geom.to_dict(), "method": method})]
    if pgm:
        files.append(write_pgm(out / "recon.pgm", image))
    if curves is not None:
        _write_curves(out / "curves.csv", curves)
        files.append(out / "curves.csv")
    timing = {"method": method, "seconds_total": elapsed,
              "iterations": iterations,
              "seconds_per_iteration": elapsed / iterations if iterations else None,
              "kernel_backend": backend.backend_name()}
    (out / "timing.json").write_text(json.dumps(timing, sort_keys=True, indent=1) + "\n")
    (out / "config.json").write_text(json.dumps(
        {"method": method, "config": cfg}, sort_keys=True, indent=1) + "\n")
    return files, image


# ---------------------------------------------------------------------------
# evaluate


def append_eval_row(csv_path, method, intensity, psnr_db, ssim_val):
    csv_path = pathlib.Path(csv_path)
    new_file = not csv_path.exists() or csv_path.stat().st_size == 0
    with open(csv_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(EVAL_HEADER)
        writer.writerow([method, _fmt(float(intensity)), _fmt_metric(psnr_db),
                         _fmt_metric(ssim_val)])


def _fmt_metric(v):
    v = float(v)
    if math.isinf(v):
        return "inf"
    return repr(v)


def run_evaluate(recon_path, gt_path, csv_path=None, method="unknown", intensity=0.0):
    recon, _ = read_raw(recon_path)
    gt, _ = read_raw(gt_path)
    p = psnr(recon.astype(np.float64), gt.astype(np.float64))
    s = ssim(recon.astype(np.float64), gt.astype(np.float64))
    print(f"method={method} intensity={_fmt_metric(intensity)} "
          f"psnr_db={_fmt_metric(p)} ssim={_fmt_metric(s)}")
    if csv_path:
        append_eval_row(csv_path, method, intensity, p, s)
    return p, s


# ---------------------------------------------------------------------------
# benchmark


def _benchmark_cell(cell):
    """One (phantom, intensity) cell: simulate once, run every method."""
    cfg, phantom, intensity, idx, out_dir, methods = cell
    cell_cfg = json.loads(json.dumps(cfg))  # deep copy
    cell_cfg["simulator"]["phantom"] = phantom["name"]
    cell_cfg["simulator"]["size"] = phantom["size"]
    cell_cfg["simulator"]["intensity"] = intensity
    cell_cfg["simulator"]["seed"] = cfg["simulator"]["seed"] + idx
    cell_dir = pathlib.Path(out_dir) / f"{phantom['name']}_{_fmt(float(intensity))}"
    files = [str(p) for p in run_simulate(cell_cfg, cell_dir)]
    rows = []
    for method in methods:
        mdir = cell_dir / method
        mfiles, image = run_reconstruct(
            cell_cfg, method, cell_dir / "sinogram.raw", mdir,
            gt_path=cell_dir / "ground_truth.raw")
        gt, _ = read_raw(cell_dir / "ground_truth.raw")
        rows.append((method, float(intensity),
                     psnr(image, gt.astype(np.float64)),
                     ssim(image, gt.astype(np.float64))))
        files.extend(str(p) for p in mfiles)
    return phantom["name"], rows, files


def run_benchmark(cfg, out_dir):
    bench = cfg["benchmark"]
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for phantom in bench["phantoms"]:
        if not isinstance(phantom, dict) or "name" not in phantom or "size" not in phantom:
            raise ConfigError("benchmark.phantoms entries need name and size")
        for idx, intensity in enumerate(bench["intensities"]):
            cells.append((cfg, phantom, float(intensity), idx, str(out),
                          bench["methods"]))

    workers = max(1, int(os.environ.get("TOMOFORGE_THREADS", "1")))
    results, failures = [], []
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            futures = [pool.submit(_benchmark_cell, c) for c in cells]
            for cell, fut in zip(cells, futures):
                try:
                    results.append(fut.result())
                except Exception:
                    failures.append({"cell": f"{cell[1]['name']}@{cell[2]:g}",
                                     "error": traceback.format_exc()})
    else:
        for cell in cells:
            try:
                results.append(_benchmark_cell(cell))
            except Exception:
                failures.append({"cell": f"{cell[1]['name']}@{cell[2]:g}",
                                 "error": traceback.format_exc()})

    all_files = []
    by_phantom = {}
    for name, rows, files in results:
        by_phantom.setdefault(name, []).extend(rows)
        all_files.extend(files)
    for name, rows in sorted(by_phantom.items()):
        table = out / f"results_{name}.csv"
        rows.sort(key=lambda r: (r[1], bench["methods"].index(r[0])))
        with open(table, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EVAL_HEADER)
            for method, intensity, p, s in rows:
                writer.writerow([method, _fmt(intensity), _fmt_metric(p),
                                 _fmt_metric(s)])
        all_files.append(str(table))

    manifest = {"artifacts": sorted(all_files), "failures": failures,
                "config": cfg, "kernel_backend": backend.backend_name()}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True,
                                                  indent=1) + "\n")
    return failures


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="tomoforge",
        description="dataset-free low-dose fan-beam CT reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate low-dose measurements")
    _add_common(p_sim)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--phantom")
    p_sim.add_argument("--size", type=int)
    p_sim.add_argument("--angles", type=int)
    p_sim.add_argument("--bins", type=int)
    p_sim.add_argument("--pixel-size", type=float)
    p_sim.add_argument("--intensity", type=float)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--background", type=float)

    p_rec = sub.add_parser("reconstruct", help="reconstruct from a sinogram")
    _add_common(p_rec)
    p_rec.add_argument("--method", required=True,
                       choices=["fbp", "tv", "proposed"])
    p_rec.add_argument("--sinogram", required=True)
    p_rec.add_argument("--out", required=True)
    p_rec.add_argument("--gt", help="ground truth (enables best_psnr checkpointing)")
    p_rec.add_argument("--pgm", action="store_true", help="also write 16-bit PGM")
    p_rec.add_argument("--filter-window", choices=["hann", "ramp"])
    p_rec.add_argument("--frequency-scaling", type=float)
    p_rec.add_argument("--lambda", dest="lam", type=float)
    p_rec.add_argument("--iterations", type=int)
    p_rec.add_argument("--step-ratio", type=float)
    p_rec.add_argument("--lr", type=float)
    p_rec.add_argument("--net-seed", type=int)
    p_rec.add_argument("--optimizer", choices=["adamw", "sgd"])
    p_rec.add_argument("--weight-decay", type=float)
    p_rec.add_argument("--checkpoint-mode",
                       choices=["auto", "best_psnr", "best_loss"])
    p_rec.add_argument("--curve-stride", type=int)

    p_eval = sub.add_parser("evaluate", help="PSNR/SSIM of a reconstruction")
    p_eval.add_argument("recon")
    p_eval.add_argument("gt")
    p_eval.add_argument("--csv", help="append a CSV row here")
    p_eval.add_argument("--method", default="unknown")
    p_eval.add_argument("--intensity", type=float, default=0.0)

    p_bench = sub.add_parser("benchmark",
                             help="methods x intensities comparison grid")
    _add_common(p_bench)
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--size", type=int)
    p_bench.add_argument("--angles", type=int)
    p_bench.add_argument("--bins", type=int)
    p_bench.add_argument("--pixel-size", type=float)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--tv-iterations", type=int)
    p_bench.add_argument("--proposed-iterations", type=int)
    return parser


def _cfg_from_args(args):
    cfg = load_config(args)
    flag_map = [
        ("phantom", "simulator", "phantom"), ("size", "simulator", "size"),
        ("intensity", "simulator", "intensity"), ("seed", "simulator", "seed"),
        ("background", "simulator", "background"),
        ("angles", "geometry", "num_angles"), ("bins", "geometry", "num_bins"),
        ("pixel_size", "geometry", "pixel_size"),
        ("filter_window", "fbp", "window"),
        ("frequency_scaling", "fbp", "frequency_scaling"),
        ("lam", "tv", "lambda"), ("step_ratio", "tv", "step_ratio"),
        ("lr", "proposed", "lr"), ("net_seed", "proposed", "net_seed"),
        ("optimizer", "proposed", "optimizer"),
        ("weight_decay", "proposed", "weight_decay"),
        ("checkpoint_mode", "proposed", "checkpoint_mode"),
        ("curve_stride", "proposed", "curve_stride"),
        ("tv_iterations", "tv", "iterations"),
        ("proposed_iterations", "proposed", "iterations"),
    ]
    for attr, block, key in flag_map:
        _apply_flag(cfg, block, key, getattr(args, attr, None))
    iterations = getattr(args, "iterations", None)
    if iterations is not None:
        method = getattr(args, "method", None)
        if method == "tv":
            cfg["tv"]["iterations"] = iterations
        else:
            cfg["proposed"]["iterations"] = iterations
    if getattr(args, "size", None) is not None and args.command == "benchmark":
        cfg["benchmark"]["phantoms"] = [{"name": "shepp-logan", "size": args.size}]
    return cfg


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "evaluate":
            run_evaluate(args.recon, args.gt, args.csv, args.method,
                         args.intensity)
            return 0
        cfg = _cfg_from_args(args)
        if args.command == "simulate":
            if cfg["simulator"]["intensity"] is None:
                parser.error("--intensity is required for simulate")
            files = run_simulate(cfg, args.out)
            print("\n".join(str(f) for f in files))
            return 0
        if args.command == "reconstruct":
            files, _ = run_reconstruct(cfg, args.method, args.sinogram,
                                       args.out, args.gt, args.pgm)
            print("\n".join(str(f) for f in files))
            return 0
        if args.command == "benchmark":
            failures = run_benchmark(cfg, args.out)
            for failure in failures:
                print(f"cell {failure['cell']} failed:\n{failure['error']}",
                      file=sys.stderr)
            return 1 if failures else 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, FileFormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
