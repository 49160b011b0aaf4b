"""Command-line front end for the tactile reconstruction pipeline.

Subcommands: gen-dataset, train, build-lut, reconstruct, eval,
export-ply, plot. Every command takes --config PATH (a JSON pipeline
config), --seed N (overrides the config seed), and --out DIR.

Exit codes
----------
0  success
2  configuration error (bad config file, bad values, bad usage)
3  I/O error (missing or unwritable paths)
4  solver non-convergence
5  channel-mode mismatch between a request and a stored estimator
6  file format error (corrupt or foreign rasters, checkpoints, tables)
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .config import PipelineConfig
from .dataset import generate_calibration_dataset, load_dataset, save_dataset
from .errors import ConfigError, ConvergenceError, FormatError, ModeMismatchError
from .estimation import estimate_normal_map
from .fileio import (read_raster, write_heatmap_png, write_normals_png,
                     write_pointcloud_ply, write_raster, write_rgb_png)
from .geometry import indent_surface
from .integration import (DepthMap, depth_to_pointcloud, extract_boundary_prior,
                          integrate_normals, normals_to_gradients)
from .lookup import load_lut, lut_build, save_lut
from .metrics import MethodMetrics, MetricsReport
from .mlp import ChannelMode, load_model, psnn_train, save_model
from .raster import NormalMap, normalize_vectors
from .render import TactileFrame

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_MODE = 5
EXIT_FORMAT = 6


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _out_dir(args, config: PipelineConfig) -> str:
    out = args.out if args.out else config.path("out")
    os.makedirs(out, exist_ok=True)
    return out


def _place_file(args, config: PipelineConfig, path_key: str) -> str:
    """Default file target from the config, relocated into --out if given."""
    target = config.path(path_key)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        return os.path.join(args.out, os.path.basename(target))
    parent = os.path.dirname(target)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return target


def _load_estimator(path):
    """Open a stored estimator by magic: PSNN checkpoint or lookup table."""
    with open(path, "rb") as fh:
        head = fh.read(5)
    if head[:5] == b"PSNN1":
        return load_model(path)
    if head[:4] == b"LUT1":
        return load_lut(path)
    raise FormatError(f"{path}: neither a model checkpoint nor a lookup table")


def _check_mode(estimator, requested: str | None) -> None:
    if requested is None:
        return
    stored = estimator.channel_mode
    if stored is not ChannelMode(requested):
        raise ModeMismatchError(
            f"estimator was built for {stored.value}, requested {requested}")


def _read_sample_raster(path):
    """A stored frame raster: 6 render channels or a 10-channel sample."""
    channels, mask = read_raster(path)
    if channels.shape[0] not in (6, 10):
        raise FormatError(f"{path}: expected 6 or 10 channels, found {channels.shape[0]}")
    if mask is None:
        mask = np.ones(channels.shape[1:], dtype=bool)
    frame = TactileFrame(channels=np.clip(channels[:6], 0.0, 1.0), mask=mask)
    gt_normals = None
    contact = None
    if channels.shape[0] == 10:
        nx, ny, nz = normalize_vectors(channels[6], channels[7], channels[8])
        gt_normals = NormalMap(nx, ny, nz, mask)
        contact = (channels[9] > 0.5) & mask
    return frame, gt_normals, contact


def cmd_gen_dataset(args) -> int:
    config = _load_config(args)
    probe = config.probe()
    integration = config.integration()
    dataset = generate_calibration_dataset(
        config.surface(), config.camera(), config.render(),
        n_samples=int(probe["count"]), probe_radius=float(probe["radius"]),
        indentation_range=(float(probe["indentation_min"]),
                           float(probe["indentation_max"])),
        seed=config.seed, band_width=int(integration["band_width"]),
        prior_weight=float(integration["prior_weight"]),
        smooth_crease=bool(probe["smooth_crease"]))
    out = args.out if args.out else config.path("dataset")
    save_dataset(dataset, out)
    n_train = len(dataset.indices("train"))
    n_test = len(dataset.indices("test"))
    print(f"wrote {len(dataset)} samples ({n_train} train / {n_test} test) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    dataset = load_dataset(args.dataset if args.dataset else config.path("dataset"))
    train_config = config.train()
    if args.channel_mode:
        train_config = dataclasses.replace(train_config,
                                           channel_mode=ChannelMode(args.channel_mode))
    model, history = psnn_train(dataset, train_config)
    checkpoint = _place_file(args, config, "checkpoint")
    save_model(checkpoint, model, train_config)
    with open(checkpoint + ".history.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"epoch_loss": history}, indent=2, sort_keys=True) + "\n")
    print(f"trained {train_config.channel_mode.value} model, "
          f"{train_config.epochs} epochs, final loss {history[-1]:.6f}")
    print(f"wrote {checkpoint}")
    return EXIT_OK


def cmd_build_lut(args) -> int:
    config = _load_config(args)
    dataset = load_dataset(args.dataset if args.dataset else config.path("dataset"))
    mode = ChannelMode(args.channel_mode) if args.channel_mode else ChannelMode.RGB_ONLY
    table = lut_build(dataset, bins_per_channel=config.lut_bins(), channel_mode=mode)
    target = _place_file(args, config, "lut")
    save_lut(target, table)
    print(f"built {mode.value} lookup table with {len(table.keys)} populated bins")
    print(f"wrote {target}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    config = _load_config(args)
    estimator = _load_estimator(args.estimator)
    _check_mode(estimator, args.channel_mode)
    frame, _, _ = _read_sample_raster(args.sample)
    integration = config.integration()
    prior = None
    if args.prior == "cad-edges":
        surface = config.surface()
        if surface.shape != frame.shape:
            raise ConfigError(
                f"config surface is {surface.shape}, frame is {frame.shape}")
        prior = extract_boundary_prior(surface,
                                       band_width=int(integration["band_width"]),
                                       weight=float(integration["prior_weight"]))
    normals = estimate_normal_map(frame, estimator)
    depth = integrate_normals(normals, prior=prior, method=integration["solver"],
                              nz_floor=float(integration["nz_floor"]),
                              tol=float(integration["tol"]),
                              max_iterations=int(integration["max_iterations"]))
    pitch = float(config.data["surface"]["pixel_pitch"])
    depth_mm = depth.to_mm(pitch)
    out = _out_dir(args, config)
    write_raster(os.path.join(out, "depth.tras"), depth_mm.z, depth_mm.mask)
    write_pointcloud_ply(os.path.join(out, "cloud.ply"),
                         depth_to_pointcloud(depth_mm, pitch))
    write_normals_png(os.path.join(out, "normals.png"), normals)
    write_heatmap_png(os.path.join(out, "depth.png"), depth_mm.z, depth_mm.mask)
    write_rgb_png(os.path.join(out, "frame.png"), frame.channels[:3], frame.mask)
    clamped = depth.diagnostics.get("clamped_pixels", 0)
    print(f"reconstructed {frame.shape[1]}x{frame.shape[0]} depth "
          f"(prior={args.prior}, solver={integration['solver']}, "
          f"clamped_pixels={clamped})")
    print(f"wrote depth.tras, cloud.ply, normals.png, depth.png, frame.png to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    dataset = load_dataset(args.dataset if args.dataset else config.path("dataset"))
    test_indices = dataset.indices("test")
    if not test_indices:
        raise ConfigError("dataset has no held-out test samples")
    integration = config.integration()
    pitch = dataset.surface.pixel_pitch
    prior = None
    if args.prior == "cad-edges":
        prior = extract_boundary_prior(dataset.surface,
                                       band_width=int(integration["band_width"]),
                                       weight=float(integration["prior_weight"]))
    methods = []
    for estimator_path in args.estimators:
        estimator = _load_estimator(estimator_path)
        name = os.path.basename(estimator_path)
        abs_p = abs_q = 0.0
        n_grad = 0
        abs_depth = depth_pixels = 0.0
        abs_depth_contact = contact_pixels = 0.0
        clamped = 0
        started = time.perf_counter()
        for index in test_indices:
            sample = dataset.samples[index]
            estimated = estimate_normal_map(sample.frame, estimator)
            region = sample.contact_mask.as_bool()
            est_grad = normals_to_gradients(estimated)
            true_grad = normals_to_gradients(sample.gt_normals)
            in_region = region & est_grad.mask & true_grad.mask
            abs_p += float(np.abs(est_grad.p[in_region] - true_grad.p[in_region]).sum())
            abs_q += float(np.abs(est_grad.q[in_region] - true_grad.q[in_region]).sum())
            n_grad += int(in_region.sum())
            depth = integrate_normals(estimated, prior=prior,
                                      method=integration["solver"],
                                      nz_floor=float(integration["nz_floor"]),
                                      tol=float(integration["tol"]),
                                      max_iterations=int(integration["max_iterations"]))
            clamped += depth.diagnostics.get("clamped_pixels", 0)
            if prior is not None:
                truth_mm = indent_surface(dataset.surface, sample.probe)[0]
                err = np.abs(depth.to_mm(pitch).z - truth_mm.values)
                valid = depth.mask & truth_mm.mask
                abs_depth += float(err[valid].sum())
                depth_pixels += int(valid.sum())
                abs_depth_contact += float(err[valid & region].sum())
                contact_pixels += int((valid & region).sum())
        runtime = time.perf_counter() - started
        if n_grad == 0:
            raise ConfigError("test split has no contact pixels to evaluate")
        gx = abs_p / n_grad
        gy = abs_q / n_grad
        methods.append(MethodMetrics(
            name=name, gx_mae=gx, gy_mae=gy, total_mae=gx + gy,
            pixel_pitch=pitch, n_pixels=n_grad, clamped_pixels=clamped,
            runtime_s=runtime,
            depth_mae_mm=(abs_depth / depth_pixels) if depth_pixels else None,
            depth_mae_contact_mm=(abs_depth_contact / contact_pixels)
            if contact_pixels else None))
    report = MetricsReport(methods=tuple(methods), sample_count=len(test_indices),
                           extra={"split": "test", "prior": args.prior,
                                  "solver": integration["solver"]})
    out = _out_dir(args, config)
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    text = report.render_text()
    with open(os.path.join(out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    print(f"wrote metrics.json and metrics.txt to {out}")
    return EXIT_OK


def cmd_export_ply(args) -> int:
    config = _load_config(args)
    channels, mask = read_raster(args.raster)
    if channels.shape[0] != 1:
        raise FormatError(f"{args.raster}: expected a single-channel depth raster")
    if mask is None:
        mask = np.ones(channels.shape[1:], dtype=bool)
    depth = DepthMap(z=channels[0], mask=mask, units="mm")
    pitch = float(config.data["surface"]["pixel_pitch"])
    out = _out_dir(args, config)
    stem = os.path.splitext(os.path.basename(args.raster))[0]
    target = os.path.join(out, stem + ".ply")
    points = depth_to_pointcloud(depth, pitch)
    write_pointcloud_ply(target, points)
    print(f"wrote {len(points)} points to {target}")
    return EXIT_OK


def cmd_plot(args) -> int:
    config = _load_config(args)
    channels, mask = read_raster(args.raster)
    if mask is None:
        mask = np.ones(channels.shape[1:], dtype=bool)
    out = _out_dir(args, config)
    stem = os.path.splitext(os.path.basename(args.raster))[0]
    written = []
    if channels.shape[0] == 10:
        frame, gt_normals, contact = _read_sample_raster(args.raster)
        write_rgb_png(os.path.join(out, f"{stem}_frame.png"),
                      frame.channels[:3], frame.mask)
        write_rgb_png(os.path.join(out, f"{stem}_nir.png"),
                      frame.channels[3:6], frame.mask)
        write_normals_png(os.path.join(out, f"{stem}_normals.png"), gt_normals)
        write_heatmap_png(os.path.join(out, f"{stem}_contact.png"),
                          contact.astype(np.float64), mask, vmin=0.0, vmax=1.0)
        written = [f"{stem}_frame.png", f"{stem}_nir.png",
                   f"{stem}_normals.png", f"{stem}_contact.png"]
    else:
        for index in range(channels.shape[0]):
            name = f"{stem}_ch{index}.png"
            write_heatmap_png(os.path.join(out, name), channels[index], mask)
            written.append(name)
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactile3d",
        description="Synthetic tactile sensing pipeline: render, learn, integrate.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=None, metavar="N",
                        help="override the config seed")
    common.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (default from config paths)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", parents=[common],
                       help="render a calibration dataset of probe presses")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", parents=[common],
                       help="train the normal-estimation network")
    p.add_argument("--dataset", default=None, help="dataset directory")
    p.add_argument("--channel-mode", choices=["rgb", "rgbnir"], default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-lut", parents=[common],
                       help="build an intensity-to-gradient lookup table")
    p.add_argument("--dataset", default=None, help="dataset directory")
    p.add_argument("--channel-mode", choices=["rgb", "rgbnir"], default=None)
    p.set_defaults(func=cmd_build_lut)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="frame -> normals -> depth, with exports")
    p.add_argument("sample", help="frame or dataset-sample raster (.tras)")
    p.add_argument("estimator", help="model checkpoint or lookup table")
    p.add_argument("--prior", choices=["none", "cad-edges"], default="cad-edges")
    p.add_argument("--channel-mode", choices=["rgb", "rgbnir"], default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", parents=[common],
                       help="score estimators on the held-out split")
    p.add_argument("estimators", nargs="+", help="checkpoints or lookup tables")
    p.add_argument("--dataset", default=None, help="dataset directory")
    p.add_argument("--prior", choices=["none", "cad-edges"], default="cad-edges")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-ply", parents=[common],
                       help="depth raster to ASCII point cloud")
    p.add_argument("raster", help="single-channel depth raster (.tras)")
    p.set_defaults(func=cmd_export_ply)

    p = sub.add_parser("plot", parents=[common],
                       help="diagnostic PNGs for a stored raster")
    p.add_argument("raster", help="raster file (.tras)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModeMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODE
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
