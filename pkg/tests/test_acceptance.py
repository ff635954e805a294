"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 4, 5, 6 and 9 train desk-scale networks and take several minutes
each on one CPU core.  Run just this file with::

    pytest -v -s tests/test_acceptance.py
"""

import csv
import math
import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from oracles import psnr_ref, ssim_ref
from test_models import finite_difference_check, randomize
from stress_sr.acquisition import ScanProtocol, acquire, add_frame_noise, assemble_stack
from stress_sr.cli import main as cli_main
from stress_sr.io import read_volume, write_volume
from stress_sr.metrics import psnr, ssim
from stress_sr.models import BDNConfig, SRConfig, bdn_forward, build_bdn, build_sr, l1_loss, mse_loss
from stress_sr.motion import STATIC, synthesize_trajectory
from stress_sr.phantom import PhantomSpec, generate_phantom
from stress_sr.pipeline import (
    baseline_si,
    baseline_smore,
    baseline_ti,
    desk_config,
    evaluate,
    make_benchmark,
    mean_metric,
    run_inference,
    run_training,
)
from stress_sr.volume import Volume, rician_magnitude

HELD_OUT = 5


def _metric_means(path, metric="psnr"):
    sums = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["metric"] == metric:
                sums.setdefault(row["method"], []).append(float(row["value"]))
    return {k: float(np.mean(v)) for k, v in sums.items()}


def test_criterion_01_metric_oracles(verdict):
    rng = np.random.default_rng(2024)
    worst_psnr = worst_ssim = 0.0
    elapsed = 0.0
    for _ in range(10):
        b = rng.uniform(0, 1, size=(16, 16, 16))
        a = b + rng.normal(0, 0.1, size=b.shape)
        mask = rng.uniform(size=b.shape) > 0.3
        t0 = time.perf_counter()
        ours_p, ours_s = psnr(a, b, mask), ssim(a, b, mask)
        elapsed += time.perf_counter() - t0
        worst_psnr = max(worst_psnr, abs(ours_p - psnr_ref(a, b, mask)))
        worst_ssim = max(worst_ssim, abs(ours_s - ssim_ref(a, b, mask)))
    ok = worst_psnr < 1e-6 and worst_ssim < 1e-4 and elapsed < 10
    verdict(1, ok, f"max |dPSNR| {worst_psnr:.2e} dB, max |dSSIM| {worst_ssim:.2e}, runtime {elapsed:.2f} s")


def test_criterion_02_blind_spot(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(100):
        cfg = BDNConfig(num_channels=int(rng.choice([4, 6, 8])), num_layers=int(rng.integers(2, 5)), seed=trial)
        net = randomize(build_bdn(cfg), trial)
        h, w = rng.integers(12, 33, size=2)
        img = rng.normal(size=(h, w)).astype(np.float32)
        i, j = int(rng.integers(h)), int(rng.integers(w))
        pert = img.copy()
        pert[i, j] += 50 * rng.normal()
        worst = max(worst, abs(float(bdn_forward(net, pert)[i, j] - bdn_forward(net, img)[i, j])))
    verdict(2, worst < 1e-6, f"max change at the perturbed pixel {worst:.2e} over 100 triples")


def test_criterion_03_static_round_trip(verdict):
    phantom, kp = generate_phantom(PhantomSpec(shape=(32, 32, 32), seed=5))
    flat, _ = generate_phantom(PhantomSpec(shape=(32, 32, 32), seed=5, z_constant=True))
    failures = []
    for n_i in (1, 2, 4):
        proto = ScanProtocol(n_interleave=n_i, num_slices=32, stack_duration_s=1.5, num_stacks=2)
        traj = synthesize_trajectory(proto.scan_duration_s + 0.05, 0.05, STATIC, keypoints=kp)
        frames = acquire(phantom, traj, proto)
        for j in range(2):
            if not np.array_equal(assemble_stack(frames[j * n_i : (j + 1) * n_i], proto), phantom.data):
                failures.append(f"stack {j} at N_I={n_i}")
        for k, out in enumerate(baseline_ti(frames, proto) if len(frames) > 1 else []):
            if not np.array_equal(out.data, phantom.data.astype(out.data.dtype)):
                failures.append(f"TI frame {k + 1} at N_I={n_i}")
        for k, out in enumerate(baseline_si(acquire(flat, traj, proto), proto)):
            if np.abs(out.data - flat.data).max() > 1e-6:
                failures.append(f"SI frame {k + 1} at N_I={n_i}")
    detail = "stacks bit-exact, SI and TI exact for N_I in 1, 2, 4" if not failures else "mismatch: " + ", ".join(failures)
    verdict(3, not failures, detail)


def _cli(*args):
    code = cli_main([str(a) for a in args])
    assert code == 0, f"stress-sr {args[0]} exited with {code}"


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """Two identical desk-scale command-line runs at N_I=2 with seed 11."""
    runs = []
    for name in ("first", "second"):
        root = tmp_path_factory.mktemp(f"desk_{name}")
        common = ["--seed", "11", "--jobs", "1"]
        _cli("phantom", "--out", root / "phantom", *common)
        _cli("trajectory", "--phantom", root / "phantom", "--out", root / "trajectory", *common)
        _cli("acquire", "--phantom", root / "phantom", "--trajectory", root / "trajectory", "--out", root / "acq", *common)
        t0 = time.perf_counter()
        _cli("train", "--scan", root / "acq/scan", "--out", root / "model", *common)
        _cli("infer", "--scan", root / "acq/scan", "--model", root / "model", "--out", root / "stress", *common)
        elapsed = time.perf_counter() - t0
        _cli("baseline", "--scan", root / "acq/scan", "--method", "SI", "--out", root / "si", *common)
        _cli("evaluate", "--truth", root / "acq/truth", "--series", f"STRESS={root / 'stress'}",
             "--series", f"SI={root / 'si'}", "--out", root / "eval", *common)
        runs.append((root, elapsed))
    return runs


@pytest.mark.slow
def test_criterion_04_desk_training_benefit(verdict, desk_runs):
    root, elapsed = desk_runs[0]
    means = _metric_means(root / "eval/metrics.csv")
    gain = means["STRESS"] - means["SI"]
    ok = gain >= 1.0 and elapsed < 1800
    verdict(4, ok, f"STRESS {means['STRESS']:.2f} dB vs SI {means['SI']:.2f} dB (gain {gain:+.2f} dB, "
                   f"need >= +1.00) over {HELD_OUT} held-out frames; train+infer {elapsed:.0f} s (limit 1800 s)")


@pytest.mark.slow
def test_criterion_05_ordering_mirror(verdict):
    torch.set_num_threads(1)
    b = make_benchmark(4)
    train, test = b.split(HELD_OUT)
    cfg = desk_config(b.protocol)
    rows = evaluate(baseline_si(b.frames, b.protocol), b.truth, test, "SI", with_ssim=False)
    smore, _ = baseline_smore(b.frames, cfg, train_frames=train)
    rows += evaluate(smore, b.truth, test, "SMORE", with_ssim=False)
    bundle = run_training(train, cfg)
    rows += evaluate(run_inference(b.frames, bundle, cfg), b.truth, test, "STRESS", with_ssim=False)
    s, m, i = (mean_metric(rows, k) for k in ("STRESS", "SMORE", "SI"))
    verdict(5, s > m > i, f"N_I=4 mean PSNR STRESS {s:.2f} > SMORE {m:.2f} > SI {i:.2f} dB")


@pytest.mark.slow
def test_criterion_06_bdn_mirror(verdict):
    torch.set_num_threads(1)
    b = make_benchmark(4, noise_fraction=0.05)
    train, test = b.split(HELD_OUT)
    plain_cfg = desk_config(b.protocol)
    bdn_cfg = replace(plain_cfg, enable_bdn=True)
    plain = run_inference(b.frames, run_training(train, plain_cfg), plain_cfg)
    with_bdn = run_inference(b.frames, run_training(train, bdn_cfg), bdn_cfg)
    rows = evaluate(plain, b.truth, test, "plain", with_ssim=False)
    rows += evaluate(with_bdn, b.truth, test, "bdn", with_ssim=False)
    p, d = mean_metric(rows, "plain"), mean_metric(rows, "bdn")
    verdict(6, d > p, f"sigma 5%, N_I=4: with BDN {d:.2f} dB vs without {p:.2f} dB")


def test_criterion_07_rician(verdict):
    sigma = 0.2
    samples = rician_magnitude(np.zeros(1_000_000), sigma, np.random.default_rng(3))
    expected = sigma * math.sqrt(math.pi / 2)
    rel = abs(samples.mean() - expected) / expected
    phantom, kp = generate_phantom(PhantomSpec(shape=(24, 24, 24)))
    proto = ScanProtocol(n_interleave=2, num_slices=24, stack_duration_s=1.0, num_stacks=1)
    frames = acquire(phantom, synthesize_trajectory(1.1, 0.05, STATIC, keypoints=kp), proto)
    a, b, c = (add_frame_noise(frames, 0.05, seed) for seed in (1, 1, 2))
    same = all(np.array_equal(x.slices, y.slices) for x, y in zip(a, b))
    differs = any(not np.array_equal(x.slices, y.slices) for x, y in zip(a, c))
    ok = rel < 0.01 and same and differs
    verdict(7, ok, f"zero-signal mean {samples.mean():.5f} vs {expected:.5f} (rel. err {rel:.2e}); "
                   f"same seed identical: {same}, other seed differs: {differs}")


def test_criterion_08_gradient_check(verdict):
    rng = np.random.default_rng(0)
    sr = randomize(build_sr(SRConfig(num_blocks=2, num_channels=4, in_channels=3)), 0)
    x, y = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(2, 1, 8, 8))
    e_sr = finite_difference_check(sr, l1_loss, x, y, n_params=30)
    bdn = randomize(build_bdn(BDNConfig(num_channels=4, num_layers=2)), 1)
    img = rng.normal(size=(2, 1, 8, 8))
    e_bdn = finite_difference_check(bdn, mse_loss, img, img, n_params=30)
    ok = e_sr < 1e-3 and e_bdn < 1e-3
    verdict(8, ok, f"max relative error L1/SR {e_sr:.2e}, MSE/BDN {e_bdn:.2e}")


@pytest.mark.slow
def test_criterion_09_end_to_end_determinism(verdict, desk_runs):
    (a, _), (b, _) = desk_runs
    same_ckpt = (a / "model/model.ckpt").read_bytes() == (b / "model/model.ckpt").read_bytes()
    same_csv = (a / "eval/metrics.csv").read_bytes() == (b / "eval/metrics.csv").read_bytes()
    verdict(9, same_ckpt and same_csv, f"checkpoints identical: {same_ckpt}, metrics CSVs identical: {same_csv}")


def test_criterion_10_format_round_trip(verdict, tmp_path):
    rng = np.random.default_rng(10)
    shapes = [(1, 1, 1), (1, 1, 7), (1, 5, 1), (4, 1, 1), (1, 3, 9), (2, 1, 2)]
    while len(shapes) < 20:
        shapes.append(tuple(int(n) for n in rng.integers(1, 17, size=3)))
    mismatched = []
    for n, shape in enumerate(shapes):
        v = Volume(rng.normal(size=shape).astype(np.float32), spacing=tuple(rng.uniform(0.2, 4, 3)),
                   origin=tuple(rng.normal(size=3) * 50))
        first, second = tmp_path / f"{n}a.strvol", tmp_path / f"{n}b.strvol"
        write_volume(first, v)
        write_volume(second, read_volume(first))
        if first.read_bytes() != second.read_bytes():
            mismatched.append(shape)
    verdict(10, not mismatched, f"20 volumes, {len(mismatched)} mismatches" + (f": {mismatched}" if mismatched else ""))
