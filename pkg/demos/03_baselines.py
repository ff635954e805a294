"""Compare the interpolation baselines on a moving phantom.

SI interpolates each frame along z, TI interpolates each slice location over
time, STI averages the two.
"""

from stress_sr.pipeline import baseline_si, baseline_sti, baseline_ti, evaluate, make_benchmark, mean_metric

bench = make_benchmark(2, num_stacks=4)
frames = range(len(bench.frames))
for name, fn in (("SI", baseline_si), ("TI", baseline_ti), ("STI", baseline_sti)):
    rows = evaluate(fn(bench.frames, bench.protocol), bench.truth, frames, name)
    print(f"{name:4s} PSNR {mean_metric(rows, name):6.2f} dB   SSIM {mean_metric(rows, name, 'ssim'):.4f}")
