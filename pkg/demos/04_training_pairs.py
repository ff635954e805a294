"""Show the self-supervised training pairs.

Each frame is interpolated, transposed and scanned again with the same
interleaving; the re-acquired slabs become high-resolution targets for the
low-resolution context around them.
"""

from stress_sr.pipeline import build_training_set, desk_config, make_benchmark

bench = make_benchmark(4, num_stacks=2)
cfg = desk_config(bench.protocol)
lr, hr = build_training_set(bench.frames, cfg)
print(f"context radius L={cfg.L}, patch {cfg.P}x{cfg.P}, stride {cfg.patch_stride}")
print(f"{len(hr)} pairs: inputs {lr.shape[1:]} (2L+1 frames), targets {hr.shape[1:]}")
err = abs(lr[:, cfg.L] - hr).mean()
print(f"mean |centre input - target| = {err:.4f} (what the network has to learn)")
