"""Command-line interface: ``stress-sr <subcommand> [options]``.

Every subcommand takes the same experiment configuration (a JSON document,
optionally adjusted with ``--set key=value``) and writes ``config.echo.json``
next to its outputs.  Errors are reported as one line on stderr starting
with ``E_CONFIG``, ``E_FORMAT``, ``E_SHAPE`` or ``E_STATE``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .acquisition import ScanProtocol, acquire, add_frame_noise, ground_truth_frame
from .metrics import pck, psnr, ssim
from .models import BDNConfig, BlindSpotNet, EDSR, ModelBundle, SRConfig, load_arrays, state_arrays
from .motion import MotionStats, synthesize_trajectory
from .phantom import PhantomSpec, generate_phantom
from .pipeline import StressConfig, baseline_si, baseline_smore, baseline_sti, baseline_ti, run_inference, run_training
from .sampling import context_radius
from .volume import foreground_mask

log = logging.getLogger("stress_sr")

# Every recognised configuration key with its default.  ``None`` means
# "derived": see the comments.
DEFAULTS = {
    "seed": 0,
    "phantom.shape": [64, 64, 64],
    "phantom.spacing_mm": [1.0, 1.0, 1.0],
    "phantom.num_ellipsoids": 6,
    "phantom.texture_amplitude": 0.25,
    "phantom.smoothness_mm": 2.0,
    "phantom.z_constant": False,
    "phantom.eye_left": None,  # scaled default placement
    "phantom.eye_right": None,
    "phantom.shoulder_mid": None,
    "motion.static": False,
    "motion.dt_s": 0.05,
    "motion.rot_mean": 3.10,
    "motion.rot_std": 3.75,
    "motion.rot_max": 59.7,
    "motion.trans_mean": 2.40,
    "motion.trans_std": 1.80,
    "motion.trans_max": 21.36,
    "motion.speed_cutoff_hz": 0.05,
    "motion.direction_cutoff_hz": 0.1,
    "protocol.n_interleave": 2,
    "protocol.stack_duration_s": 1.5,
    "protocol.num_stacks": None,  # 16 frames in total
    "noise.sigma_fraction": 0.0,
    "stress.L": None,  # round(N_I / 2)
    "stress.P": 32,
    "stress.stride": None,  # P / 2
    "stress.enable_bdn": False,
    "stress.min_foreground": 0.05,
    "stress.holdout": 5,
    "stress.sr.num_blocks": 4,
    "stress.sr.num_channels": 32,
    "stress.sr.learning_rate": 1e-3,
    "stress.sr.iterations": 2000,
    "stress.sr.batch_size": 16,
    "stress.bdn.num_channels": 16,
    "stress.bdn.num_layers": 6,
    "stress.bdn.learning_rate": 1e-3,
    "stress.bdn.iterations": 2000,
    "stress.bdn.batch_size": 16,
    "stress.bdn.patch_size": 32,
    "stress.bdn.fusion_window": 7,  # 0 keeps the raw blind-spot output
    "metrics.mask_threshold": 0.01,
    "metrics.frames": "holdout",
    "metrics.ssim": True,
    "metrics.ssim_2d": False,
    "metrics.pck_thresholds": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
}

BASELINES = ("SI", "TI", "STI", "SMORE")


class _Parser(argparse.ArgumentParser):
    """Argument errors become one ``E_CONFIG`` line instead of a usage dump."""

    def error(self, message):
        print(f"E_CONFIG: {self.prog}: {message}", file=sys.stderr)
        sys.exit(2)


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _flatten(doc, prefix=""):
    out = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=(), seed=None, environ=None) -> dict:
    """Resolve the experiment configuration.

    Precedence, lowest first: built-in defaults, ``STRESS_SEED``, the JSON
    file, ``--set`` overrides, ``--seed``.
    """
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    if environ.get("STRESS_SEED"):
        try:
            cfg["seed"] = int(environ["STRESS_SEED"])
        except ValueError:
            raise CliError("E_CONFIG", f"STRESS_SEED must be an integer, got {environ['STRESS_SEED']!r}") from None
    entries = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CliError("E_CONFIG", f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise CliError("E_CONFIG", f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise CliError("E_CONFIG", f"config file {path} must hold a JSON object")
        entries.update(_flatten(doc))
    for item in overrides:
        if "=" not in item:
            raise CliError("E_CONFIG", f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        entries[key.strip()] = _parse_value(value)
    unknown = sorted(set(entries) - set(DEFAULTS))
    if unknown:
        raise CliError("E_CONFIG", f"unknown config keys: {', '.join(unknown)}")
    cfg.update(entries)
    if seed is not None:
        cfg["seed"] = seed
    _validate(cfg)
    return cfg


def _validate(cfg):
    try:
        phantom_spec(cfg)
        motion_stats(cfg).validate()
        if cfg["noise.sigma_fraction"] < 0:
            raise ValueError("noise.sigma_fraction must be >= 0")
        if cfg["metrics.frames"] not in ("holdout", "all"):
            raise ValueError("metrics.frames must be 'holdout' or 'all'")
        if int(cfg["stress.holdout"]) < 0:
            raise ValueError("stress.holdout must be >= 0")
        protocol = scan_protocol(cfg)
        stress_config(cfg, protocol)
    except (TypeError, ValueError) as exc:
        raise CliError("E_CONFIG", f"invalid configuration: {exc}") from None


def phantom_spec(cfg) -> PhantomSpec:
    return PhantomSpec(
        shape=tuple(int(n) for n in cfg["phantom.shape"]),
        spacing=tuple(float(s) for s in cfg["phantom.spacing_mm"]),
        num_ellipsoids=int(cfg["phantom.num_ellipsoids"]),
        texture_amplitude=float(cfg["phantom.texture_amplitude"]),
        smoothness_mm=float(cfg["phantom.smoothness_mm"]),
        eye_left=cfg["phantom.eye_left"],
        eye_right=cfg["phantom.eye_right"],
        shoulder_mid=cfg["phantom.shoulder_mid"],
        z_constant=bool(cfg["phantom.z_constant"]),
        seed=int(cfg["seed"]),
    )


def motion_stats(cfg) -> MotionStats:
    if cfg["motion.static"]:
        return MotionStats(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    names = ("rot_mean", "rot_std", "rot_max", "trans_mean", "trans_std", "trans_max", "speed_cutoff_hz",
             "direction_cutoff_hz")
    return MotionStats(**{n: float(cfg[f"motion.{n}"]) for n in names})


def scan_protocol(cfg) -> ScanProtocol:
    spec = phantom_spec(cfg)
    n_i = int(cfg["protocol.n_interleave"])
    if n_i < 1:
        raise ValueError(f"protocol.n_interleave must be >= 1, got {n_i}")
    stacks = cfg["protocol.num_stacks"]
    return ScanProtocol(
        n_interleave=n_i,
        num_slices=spec.shape[2],
        slice_spacing_mm=spec.spacing[2],
        in_plane_spacing_mm=spec.spacing[0],
        stack_duration_s=float(cfg["protocol.stack_duration_s"]),
        num_stacks=int(stacks) if stacks is not None else max(1, 16 // n_i),
    )


def stress_config(cfg, protocol: ScanProtocol) -> StressConfig:
    seed = int(cfg["seed"])
    L = cfg["stress.L"]
    L = context_radius(protocol.n_interleave) if L is None else int(L)
    sr = SRConfig(
        num_blocks=int(cfg["stress.sr.num_blocks"]),
        num_channels=int(cfg["stress.sr.num_channels"]),
        in_channels=2 * L + 1,
        learning_rate=float(cfg["stress.sr.learning_rate"]),
        iterations=int(cfg["stress.sr.iterations"]),
        batch_size=int(cfg["stress.sr.batch_size"]),
        seed=seed,
    )
    bdn = BDNConfig(
        num_channels=int(cfg["stress.bdn.num_channels"]),
        num_layers=int(cfg["stress.bdn.num_layers"]),
        learning_rate=float(cfg["stress.bdn.learning_rate"]),
        iterations=int(cfg["stress.bdn.iterations"]),
        batch_size=int(cfg["stress.bdn.batch_size"]),
        patch_size=int(cfg["stress.bdn.patch_size"]),
        fusion_window=int(cfg["stress.bdn.fusion_window"]),
        seed=seed,
    )
    stride = cfg["stress.stride"]
    return StressConfig(
        protocol=protocol,
        L=L,
        P=int(cfg["stress.P"]),
        stride=None if stride is None else int(stride),
        enable_bdn=bool(cfg["stress.enable_bdn"]),
        sr=sr,
        bdn=bdn,
        min_foreground=float(cfg["stress.min_foreground"]),
        mask_threshold=float(cfg["metrics.mask_threshold"]),
        seed=seed,
    )


# --- helpers -----------------------------------------------------------------


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(out: Path, command: str, cfg: dict, inputs: dict):
    io.write_json(out / "config.echo.json", {"command": command, "config": cfg, "inputs": inputs})


def _require(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError("E_STATE", f"missing {what}: {p}")
    return p


def _read_scan(path):
    _require(Path(path) / "manifest.json", "scan manifest (run 'acquire' first)")
    return io.read_scan(path)


def _read_series(path, what):
    _require(Path(path) / "series.json", what)
    return io.read_series(path)


def _split(n_frames, holdout):
    if holdout >= n_frames:
        raise CliError("E_STATE", f"holdout of {holdout} frames leaves nothing to train on ({n_frames} frames)")
    return n_frames - holdout


def save_bundle(path, bundle: ModelBundle, cfg: StressConfig):
    header = {
        "kind": "stress-bundle",
        "L": cfg.L,
        "P": cfg.P,
        "stride": cfg.stride,
        "min_foreground": cfg.min_foreground,
        "mask_threshold": cfg.mask_threshold,
        "seed": cfg.seed,
        "enable_bdn": bundle.bdn is not None,
        "sr_config": bundle.sr_config.to_dict(),
        "bdn_config": bundle.bdn_config.to_dict() if bundle.bdn_config else None,
        "bdn_template": cfg.bdn.to_dict(),
        "noise_sigma": float(bundle.noise_sigma),
    }
    arrays = {f"sr.{k}": v for k, v in state_arrays(bundle.sr).items()}
    if bundle.bdn is not None:
        arrays.update({f"bdn.{k}": v for k, v in state_arrays(bundle.bdn).items()})
    io.write_checkpoint(path, header, arrays)


def load_bundle(path, protocol: ScanProtocol) -> tuple[ModelBundle, StressConfig]:
    _require(path, "model checkpoint (run 'train' first)")
    meta, arrays = io.read_checkpoint(path)
    if meta.get("kind") != "stress-bundle":
        raise CliError("E_FORMAT", f"{path}: not a model checkpoint")
    sr_cfg = SRConfig(**meta["sr_config"])
    sr = EDSR(sr_cfg.in_channels, sr_cfg.num_channels, sr_cfg.num_blocks)
    try:
        load_arrays(sr, {k[3:]: v for k, v in arrays.items() if k.startswith("sr.")})
        bdn = bdn_cfg = None
        if meta["bdn_config"]:
            bdn_cfg = BDNConfig(**meta["bdn_config"])
            bdn = load_arrays(BlindSpotNet(bdn_cfg.num_channels, bdn_cfg.num_layers),
                              {k[4:]: v for k, v in arrays.items() if k.startswith("bdn.")})
    except (RuntimeError, KeyError) as exc:
        raise CliError("E_FORMAT", f"{path}: checkpoint arrays do not match the network: {exc}") from None
    cfg = StressConfig(
        protocol=protocol,
        L=meta["L"],
        P=meta["P"],
        stride=meta["stride"],
        enable_bdn=meta["enable_bdn"],
        sr=sr_cfg,
        bdn=bdn_cfg or BDNConfig(**meta["bdn_template"]),
        min_foreground=meta["min_foreground"],
        mask_threshold=meta["mask_threshold"],
        seed=meta["seed"],
    )
    return ModelBundle(sr, sr_cfg, bdn, bdn_cfg, noise_sigma=float(meta.get("noise_sigma", 0.0))), cfg


def _fmt(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def write_metrics_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "method", "metric", "value"])
        for frame, method, metric, value in rows:
            w.writerow([frame, method, metric, _fmt(value)])


def read_metrics_csv(path):
    _require(path, "metrics CSV")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["frame", "method", "metric", "value"]:
        raise CliError("E_FORMAT", f"{path}: bad metrics header")
    try:
        return [(int(r[0]), r[1], r[2], float(r[3])) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise CliError("E_FORMAT", f"{path}: {exc}") from None


# --- subcommands ---------------------------------------------------------------


def cmd_phantom(args, cfg):
    out = _out_dir(args.out)
    volume, kp = generate_phantom(phantom_spec(cfg))
    io.write_volume(out / "phantom.strvol", volume)
    io.write_keypoints(out / "keypoints.csv", io.phantom_keypoint_records(kp))
    _echo(out, "phantom", cfg, {})


def cmd_trajectory(args, cfg):
    out = _out_dir(args.out)
    protocol = scan_protocol(cfg)
    kp = phantom_spec(cfg).keypoints
    if args.phantom:
        recs = io.read_keypoints(_require(Path(args.phantom) / "keypoints.csv", "phantom keypoints"))
        pts = [r.position for r in sorted(recs, key=lambda r: r.id)]
        if len(pts) != 3:
            raise CliError("E_FORMAT", "phantom keypoints must hold exactly three records")
        kp = type(kp).from_array(pts)
    dt = float(cfg["motion.dt_s"])
    traj = synthesize_trajectory(protocol.scan_duration_s + dt, dt, motion_stats(cfg), seed=int(cfg["seed"]),
                                 keypoints=kp)
    io.write_trajectory(out / "trajectory.csv", traj)
    _echo(out, "trajectory", cfg, {"phantom": args.phantom})


def cmd_acquire(args, cfg):
    phantom = io.read_volume(_require(Path(args.phantom) / "phantom.strvol", "phantom (run 'phantom' first)"))
    traj = io.read_trajectory(_require(Path(args.trajectory) / "trajectory.csv", "trajectory (run 'trajectory' first)"))
    protocol = scan_protocol(cfg)
    if phantom.shape[2] != protocol.num_slices:
        raise CliError("E_SHAPE", f"phantom has {phantom.shape[2]} slices but the protocol expects {protocol.num_slices}")
    out = _out_dir(args.out)
    clean = acquire(phantom, traj, protocol)
    sigma = float(cfg["noise.sigma_fraction"]) * float(phantom.data.max())
    frames = add_frame_noise(clean, sigma, int(cfg["seed"]))
    io.write_scan(out / "scan", frames, protocol)
    truth = [ground_truth_frame(phantom, traj, protocol, fr.frame_index) for fr in clean]
    io.write_series(out / "truth", truth)
    _echo(out, "acquire", cfg, {"phantom": args.phantom, "trajectory": args.trajectory})


def cmd_train(args, cfg):
    frames, protocol = _read_scan(args.scan)
    scfg = stress_config(cfg, protocol)
    n_train = _split(len(frames), int(cfg["stress.holdout"]))
    out = _out_dir(args.out)
    bundle = run_training(frames[:n_train], scfg, log_every=args.log_every)
    save_bundle(out / "model.ckpt", bundle, scfg)
    io.write_loss_csv(out / "sr_loss.csv", bundle.sr_loss)
    if bundle.bdn is not None:
        io.write_loss_csv(out / "bdn_loss.csv", bundle.bdn_loss)
    _echo(out, "train", cfg, {"scan": args.scan, "train_frames": n_train})


def cmd_infer(args, cfg):
    frames, protocol = _read_scan(args.scan)
    bundle, scfg = load_bundle(Path(args.model) / "model.ckpt", protocol)
    out = _out_dir(args.out)
    io.write_series(out, run_inference(frames, bundle, scfg))
    _echo(out, "infer", cfg, {"scan": args.scan, "model": args.model})


def cmd_baseline(args, cfg):
    frames, protocol = _read_scan(args.scan)
    out = _out_dir(args.out)
    inputs = {"scan": args.scan, "method": args.method}
    if args.method == "SI":
        vols = baseline_si(frames, protocol)
    elif args.method == "TI":
        vols = baseline_ti(frames, protocol)
    elif args.method == "STI":
        vols = baseline_sti(frames, protocol)
    else:
        n_train = _split(len(frames), int(cfg["stress.holdout"]))
        vols, _ = baseline_smore(frames, stress_config(cfg, protocol), train_frames=frames[:n_train])
        inputs["train_frames"] = n_train
    io.write_series(out, vols)
    _echo(out, "baseline", cfg, inputs)


def _parse_named(items, what):
    named = []
    for item in items:
        if "=" not in item:
            raise CliError("E_CONFIG", f"{what} expects NAME=DIR, got {item!r}")
        name, path = item.split("=", 1)
        named.append((name, path))
    return named


def cmd_evaluate(args, cfg):
    truth = _read_series(args.truth, "ground-truth series (written by 'acquire')")
    n = len(truth)
    if cfg["metrics.frames"] == "all":
        indices = list(range(n))
    else:
        indices = list(range(_split(n, int(cfg["stress.holdout"])), n))
    threshold = float(cfg["metrics.mask_threshold"])
    rows = []
    for name, path in _parse_named(args.series, "--series"):
        vols = _read_series(path, f"series '{name}'")
        if len(vols) != n:
            raise CliError("E_SHAPE", f"series '{name}' has {len(vols)} frames, ground truth has {n}")
        for i in indices:
            if vols[i].shape != truth[i].shape:
                raise CliError("E_SHAPE", f"series '{name}' frame {i + 1} shape {vols[i].shape} != {truth[i].shape}")
            mask = foreground_mask(truth[i], threshold)
            rows.append((i + 1, name, "psnr", psnr(vols[i], truth[i], mask)))
            if cfg["metrics.ssim"]:
                rows.append((i + 1, name, "ssim", ssim(vols[i], truth[i], mask, two_d=bool(cfg["metrics.ssim_2d"]))))
    out = _out_dir(args.out)
    write_metrics_csv(out / "metrics.csv", rows)
    inputs = {"truth": args.truth, "series": args.series}
    if args.keypoints:
        pred = io.read_keypoints(_require(args.keypoints, "predicted keypoints"))
        gt = io.read_keypoints(_require(args.keypoints_truth, "ground-truth keypoints"))
        predicted = [r for r in pred if r.role == "predicted"]
        thresholds = [float(s) for s in cfg["metrics.pck_thresholds"]]
        try:
            curve = pck(predicted, [r for r in gt if r.role == "truth"], thresholds)
        except ValueError as exc:
            raise CliError("E_SHAPE", str(exc)) from None
        with open(out / "pck.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold_mm", "pck_percent"])
            for s, v in zip(thresholds, curve):
                w.writerow([repr(s), repr(float(v))])
        inputs.update(keypoints=args.keypoints, keypoints_truth=args.keypoints_truth)
    _echo(out, "evaluate", cfg, inputs)


def summarize(rows):
    """Mean per (metric, method), ordered by metric then descending mean."""
    groups = {}
    for _, method, metric, value in rows:
        groups.setdefault((metric, method), []).append(value)
    summary = [(metric, method, float(np.mean(v)), len(v)) for (metric, method), v in groups.items()]
    return sorted(summary, key=lambda r: (r[0], -r[2], r[1]))


def _plot_setup():
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "stress-sr"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def cmd_report(args, cfg):
    rows = []
    for path in args.metrics:
        rows += read_metrics_csv(path)
    out = _out_dir(args.out)
    write_metrics_csv(out / "metrics.csv", rows)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "method", "mean", "frames"])
        for metric, method, mean, count in summarize(rows):
            w.writerow([metric, method, _fmt(mean), count])
    plt = _plot_setup()
    for metric in sorted({r[2] for r in rows}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in sorted({r[1] for r in rows if r[2] == metric}):
            pts = sorted((r[0], r[3]) for r in rows if r[1] == method and r[2] == metric)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        ax.set_xlabel("frame")
        ax.set_ylabel(metric.upper())
        ax.legend()
        fig.savefig(out / f"{metric}.svg", metadata={"Date": None})
        plt.close(fig)
    inputs = {"metrics": args.metrics}
    if args.pck:
        fig, ax = plt.subplots(figsize=(6, 4))
        for item in args.pck:
            name, path = item.split("=", 1) if "=" in item else (Path(item).parent.name, item)
            with open(_require(path, "PCK CSV"), encoding="utf-8", newline="") as fh:
                data = list(csv.reader(fh))[1:]
            ax.plot([float(r[0]) for r in data], [float(r[1]) for r in data], marker="o", label=name)
        ax.set_xlabel("threshold (mm)")
        ax.set_ylabel("PCK (%)")
        ax.legend()
        fig.savefig(out / "pck.svg", metadata={"Date": None})
        plt.close(fig)
        inputs["pck"] = args.pck
    _echo(out, "report", cfg, inputs)


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable; VALUE is parsed as JSON when possible)")
    common.add_argument("--seed", type=int, help="global seed (wins over the config file and STRESS_SEED)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for numerical kernels (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="stress-sr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", parents=[common], help="generate the procedural phantom")
    p.add_argument("--out", required=True)

    p = sub.add_parser("trajectory", parents=[common], help="synthesize a keypoint trajectory")
    p.add_argument("--phantom", help="phantom directory whose keypoints start the trajectory")
    p.add_argument("--out", required=True)

    p = sub.add_parser("acquire", parents=[common], help="simulate the interleaved scan and its ground truth")
    p.add_argument("--phantom", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="self-supervised training on a scan")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=0)

    p = sub.add_parser("infer", parents=[common], help="super-resolve every frame of a scan")
    p.add_argument("--scan", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("baseline", parents=[common], help="run one of the comparison methods")
    p.add_argument("--scan", required=True)
    p.add_argument("--method", required=True, choices=BASELINES)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="masked PSNR/SSIM per frame, optional PCK")
    p.add_argument("--truth", required=True, help="ground-truth series directory")
    p.add_argument("--series", action="append", default=[], metavar="NAME=DIR", required=True)
    p.add_argument("--keypoints", help="keypoint CSV with role=predicted records")
    p.add_argument("--keypoints-truth", help="keypoint CSV with role=truth records")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", parents=[common], help="merge metrics and draw SVG plots")
    p.add_argument("--metrics", action="append", required=True, help="metrics CSV (repeatable)")
    p.add_argument("--pck", action="append", default=[], metavar="NAME=CSV")
    p.add_argument("--out", required=True)
    return parser


COMMANDS = {
    "phantom": cmd_phantom,
    "trajectory": cmd_trajectory,
    "acquire": cmd_acquire,
    "train": cmd_train,
    "infer": cmd_infer,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed the E_CONFIG line
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise CliError("E_CONFIG", "--jobs must be >= 1")
        import torch

        torch.set_num_threads(args.jobs)
        cfg = load_config(args.config, args.overrides, args.seed)
        if args.command == "evaluate" and bool(args.keypoints) != bool(args.keypoints_truth):
            raise CliError("E_CONFIG", "--keypoints and --keypoints-truth must be given together")
        COMMANDS[args.command](args, cfg)
    except CliError as exc:
        return _fail(exc.code, exc)
    except io.FormatError as exc:
        return _fail("E_FORMAT", exc)
    except ValueError as exc:
        return _fail("E_STATE", exc)
    return 0


def _fail(code, exc) -> int:
    print(f"{code}: {' '.join(str(exc).split())}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
