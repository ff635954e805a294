"""Train a small network for a few hundred steps and super-resolve a scan.

The budget here is small so the demo finishes in a few minutes; the
acceptance suite uses 2000 iterations.
"""

from dataclasses import replace

import torch

from stress_sr.pipeline import baseline_si, desk_config, evaluate, make_benchmark, mean_metric, run_inference, run_training

torch.set_num_threads(1)
bench = make_benchmark(2)
train, test = bench.split(5)
cfg = desk_config(bench.protocol)
cfg = replace(cfg, sr=replace(cfg.sr, iterations=800))
bundle = run_training(train, cfg)
print(f"L1 loss: first {bundle.sr_loss[0]:.4f}, last {bundle.sr_loss[-1]:.4f}")

rows = evaluate(run_inference(bench.frames, bundle, cfg), bench.truth, test, "STRESS", with_ssim=False)
rows += evaluate(baseline_si(bench.frames, bench.protocol), bench.truth, test, "SI", with_ssim=False)
print(f"held-out PSNR: STRESS {mean_metric(rows, 'STRESS'):.2f} dB, SI {mean_metric(rows, 'SI'):.2f} dB")
