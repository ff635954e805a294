"""STRESS training and inference, the interpolation baselines, and the desk benchmark."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import models
from .acquisition import (
    Frame,
    ScanProtocol,
    acquire,
    add_frame_noise,
    ground_truth_frame,
    interpolate_second_stage,
    simulate_second_stage,
    slice_time,
)
from .metrics import psnr, ssim
from .models import BDNConfig, ModelBundle, SRConfig, bdn_denoise, sr_forward
from .motion import MotionStats, synthesize_trajectory
from .phantom import PhantomSpec, generate_phantom
from .sampling import DEFAULT_MIN_FOREGROUND, context_radius, extract_pairs, stack_pairs, temporal_window
from .volume import DEFAULT_MASK_THRESHOLD, Volume, foreground_mask, interpolate_frame, transpose_xz

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StressConfig:
    """Everything :func:`run_training` and :func:`run_inference` need.

    ``stride`` defaults to ``P // 2``.
    """

    protocol: ScanProtocol = field(default_factory=ScanProtocol)
    L: int = 1
    P: int = 64
    stride: int | None = None
    enable_bdn: bool = False
    sr: SRConfig = field(default_factory=SRConfig)
    bdn: BDNConfig = field(default_factory=BDNConfig)
    min_foreground: float = DEFAULT_MIN_FOREGROUND
    mask_threshold: float = DEFAULT_MASK_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.P < 8:
            raise ValueError("P must be >= 8")
        if self.sr.in_channels != 2 * self.L + 1:
            raise ValueError(f"sr.in_channels={self.sr.in_channels} but 2L+1={2 * self.L + 1}")

    @property
    def patch_stride(self) -> int:
        return self.stride if self.stride is not None else max(1, self.P // 2)

    @classmethod
    def for_protocol(cls, protocol: ScanProtocol, L: int | None = None, **kw) -> "StressConfig":
        """Config with ``L = N_I/2`` and a matching SR input width."""
        L = context_radius(protocol.n_interleave) if L is None else L
        sr = kw.pop("sr", SRConfig())
        return cls(protocol=protocol, L=L, sr=replace(sr, in_channels=2 * L + 1), **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def desk_config(protocol: ScanProtocol, L: int | None = None, enable_bdn: bool = False, seed: int = 0,
                iterations: int = 2000) -> StressConfig:
    """Small-network settings that train in minutes on one CPU core."""
    sr = SRConfig(num_blocks=4, num_channels=32, iterations=iterations, batch_size=16, learning_rate=1e-3, seed=seed)
    bdn = BDNConfig(num_channels=16, num_layers=6, iterations=2000, batch_size=16, patch_size=32, learning_rate=1e-3,
                    seed=seed)
    return StressConfig.for_protocol(protocol, L=L, P=32, sr=sr, bdn=bdn, enable_bdn=enable_bdn, seed=seed)


def bundle_denoiser(bundle: ModelBundle):
    """``images -> denoised images`` for a bundle with a denoiser, else ``None``."""
    if bundle.bdn is None:
        return None
    window = bundle.bdn_config.fusion_window
    return lambda images: bdn_denoise(bundle.bdn, images, bundle.noise_sigma, window)


def _denoise_frame(frame: Frame, denoise) -> Frame:
    # The denoiser is trained on transposed slices (y, x); keep that orientation.
    planes = np.moveaxis(frame.slices, 2, 0).transpose(0, 2, 1)
    clean = denoise(planes).transpose(0, 2, 1)
    return Frame(np.moveaxis(clean, 0, 2), frame.z_indices, frame.times, frame.frame_index, frame.spacing, frame.origin)


def interpolated_frames(frames, protocol: ScanProtocol, denoise=None) -> list[Volume]:
    if denoise is not None:
        frames = [_denoise_frame(fr, denoise) for fr in frames]
    return [interpolate_frame(fr, protocol) for fr in frames]


def _check_frames(frames, min_count):
    if len(frames) < max(min_count, 1):
        raise ValueError(f"need at least {min_count} frames, got {len(frames)}")


def build_training_set(frames, cfg: StressConfig, denoise=None):
    """Simulated second-stage pairs for every frame.

    Only slabs that the frame actually acquired serve as high-resolution
    targets.  Returns ``(lr, hr)`` arrays in canonical order.
    """
    protocol = cfg.protocol
    f_t = [transpose_xz(v) for v in interpolated_frames(frames, protocol)]
    s_t = [
        interpolate_second_stage(simulate_second_stage(v, protocol, fr.frame_index), v.shape[2])
        for v, fr in zip(f_t, frames)
    ]
    pairs = []
    for pos, (fr, hr_vol) in enumerate(zip(frames, f_t)):
        window = temporal_window(pos + 1, cfg.L, len(frames))
        target = None
        if denoise is not None:
            target = np.array(hr_vol.data)
            target[list(fr.z_indices)] = denoise(hr_vol.data[list(fr.z_indices)])
        fg = hr_vol.data > cfg.mask_threshold * hr_vol.data.max()
        pairs += extract_pairs(
            [s_t[w - 1] for w in window],
            hr_vol,
            fr.frame_index,
            cfg.L,
            cfg.P,
            cfg.patch_stride,
            slabs=fr.z_indices,
            min_foreground=cfg.min_foreground,
            foreground=fg,
            target=target,
        )
    return stack_pairs(pairs)


def bdn_training_images(frames, protocol: ScanProtocol) -> np.ndarray:
    """Acquired slices in the transposed (y, x) orientation the denoiser sees."""
    return np.concatenate([np.moveaxis(fr.slices, 2, 0).transpose(0, 2, 1) for fr in frames])


def run_training(frames, cfg: StressConfig, log_every: int = 0) -> ModelBundle:
    """Self-supervised training from one scan.

    With ``cfg.enable_bdn`` the blind-spot denoiser is trained first on the
    acquired slices and then used, frozen, to produce the SR targets.  The
    noise level for its fused output is estimated from the same slices.
    """
    _check_frames(frames, 2 * cfg.L + 1)
    bdn = bdn_loss = bdn_cfg = denoise = None
    sigma = 0.0
    if cfg.enable_bdn:
        bdn_cfg = cfg.bdn
        images = bdn_training_images(frames, cfg.protocol)
        bdn, bdn_loss = models.train_bdn(images, bdn_cfg, log_every=log_every, log=log.info)
        sigma = models.estimate_noise_sigma(images)
        log.info("estimated noise sigma %.5f", sigma)
        denoise = lambda imgs: bdn_denoise(bdn, imgs, sigma, bdn_cfg.fusion_window)  # noqa: E731
    lr, hr = build_training_set(frames, cfg, denoise=denoise)
    log.info("training set: %d pairs of %s", len(lr), lr.shape[1:])
    sr, sr_loss = models.train_sr(lr, hr, cfg.sr, log_every=log_every, log=log.info)
    return ModelBundle(sr, cfg.sr, bdn, bdn_cfg, sr_loss, bdn_loss or [], noise_sigma=sigma)


def run_inference(frames, bundle: ModelBundle, cfg: StressConfig) -> list[Volume]:
    """Super-resolve every frame from its clamped temporal window of y-z planes."""
    if bundle.sr.in_channels != 2 * cfg.L + 1:
        raise ValueError(
            f"incompatible bundle: network takes {bundle.sr.in_channels} channels, config needs {2 * cfg.L + 1}"
        )
    _check_frames(frames, 1)
    f_tilde = interpolated_frames(frames, cfg.protocol, bundle_denoiser(bundle))
    out = []
    for pos in range(len(frames)):
        window = temporal_window(pos + 1, cfg.L, len(frames))
        x = np.stack([f_tilde[w - 1].data for w in window], axis=1)
        out.append(f_tilde[pos].with_data(sr_forward(bundle.sr, x)))
    return out


def baseline_si(frames, protocol: ScanProtocol) -> list[Volume]:
    """Per-frame cubic B-spline interpolation along z."""
    return [interpolate_frame(fr, protocol) for fr in frames]


def baseline_ti(frames, protocol: ScanProtocol) -> list[Volume]:
    """Per-slice-location linear interpolation in time.

    A missing slice ``(k, z)`` is interpolated at :func:`slice_time` ``(k, z)``
    between the nearest earlier and later frames that acquired ``z``; at the
    ends of the series the nearest acquisition is copied.
    """
    _check_frames(frames, 2)
    nz = protocol.num_slices
    # For every z: chronological list of (time, plane).
    by_z = {z: [] for z in range(nz)}
    for fr in frames:
        for j, z in enumerate(fr.z_indices):
            by_z[z].append((fr.times[j], fr.slices[:, :, j]))
    out = []
    for fr in frames:
        nx, ny = fr.slices.shape[:2]
        vol = np.zeros((nx, ny, nz), dtype=np.float32)
        acquired = dict(zip(fr.z_indices, range(fr.num_slices)))
        for z in range(nz):
            if z in acquired:
                vol[:, :, z] = fr.slices[:, :, acquired[z]]
                continue
            samples = by_z[z]
            if not samples:
                raise ValueError(f"slice {z} never acquired in this series")
            t = slice_time(fr.frame_index, z, protocol)
            times = np.array([s[0] for s in samples])
            after = int(np.searchsorted(times, t))
            if after == 0:
                vol[:, :, z] = samples[0][1]
            elif after == len(samples):
                vol[:, :, z] = samples[-1][1]
            else:
                (t0, p0), (t1, p1) = samples[after - 1], samples[after]
                w = (t - t0) / (t1 - t0)
                vol[:, :, z] = (1 - w) * p0.astype(np.float64) + w * p1.astype(np.float64)
        out.append(Volume(vol, fr.spacing, fr.origin))
    return out


def baseline_sti(frames, protocol: ScanProtocol) -> list[Volume]:
    """Mean of the SI and TI estimates at missing slices; acquired slices kept."""
    si = baseline_si(frames, protocol)
    ti = baseline_ti(frames, protocol)
    out = []
    for fr, a, b in zip(frames, si, ti):
        vol = 0.5 * (a.data.astype(np.float64) + b.data.astype(np.float64))
        vol[:, :, list(fr.z_indices)] = fr.slices
        out.append(a.with_data(vol))
    return out


def smore_config(cfg: StressConfig) -> StressConfig:
    """The single-frame (L=0) variant with the same network and budget."""
    return replace(cfg, L=0, sr=replace(cfg.sr, in_channels=1))


def baseline_smore(frames, cfg: StressConfig, train_frames=None) -> tuple[list[Volume], ModelBundle]:
    scfg = smore_config(cfg)
    bundle = run_training(frames if train_frames is None else train_frames, scfg)
    return run_inference(frames, bundle, scfg), bundle


METHODS = ("SI", "TI", "STI", "SMORE", "STRESS")


@dataclass
class Benchmark:
    """A simulated scan of a moving phantom with its ground truth."""

    phantom: Volume
    protocol: ScanProtocol
    trajectory: object
    frames: list
    clean_frames: list
    truth: list
    noise_sigma: float

    def split(self, n_test: int):
        """(training frames, indices of held-out frames)."""
        n = len(self.frames)
        return self.frames[: n - n_test], list(range(n - n_test, n))


def make_benchmark(
    n_interleave: int = 2,
    num_stacks: int | None = None,
    noise_fraction: float = 0.0,
    seed: int = 0,
    stats: MotionStats = MotionStats(),
    phantom_spec: PhantomSpec | None = None,
    stack_duration_s: float = 1.5,
) -> Benchmark:
    """Moving-phantom scan with ``16`` frames by default and exact ground truth."""
    spec = phantom_spec or PhantomSpec(seed=seed)
    phantom, kp = generate_phantom(spec)
    if num_stacks is None:
        num_stacks = max(1, 16 // n_interleave)
    protocol = ScanProtocol(
        n_interleave=n_interleave,
        num_slices=phantom.shape[2],
        slice_spacing_mm=phantom.spacing[2],
        in_plane_spacing_mm=phantom.spacing[0],
        stack_duration_s=stack_duration_s,
        num_stacks=num_stacks,
    )
    dt = 0.05
    traj = synthesize_trajectory(protocol.scan_duration_s + dt, dt, stats, seed=seed, keypoints=kp)
    clean = acquire(phantom, traj, protocol)
    sigma = noise_fraction * float(phantom.data.max())
    frames = add_frame_noise(clean, sigma, seed)
    truth = [ground_truth_frame(phantom, traj, protocol, fr.frame_index) for fr in clean]
    return Benchmark(phantom, protocol, traj, frames, clean, truth, sigma)


def evaluate(volumes, truth, indices, method: str, mask_threshold: float = DEFAULT_MASK_THRESHOLD, with_ssim=True):
    """Per-frame metric rows ``(frame, method, metric, value)``."""
    rows = []
    for i in indices:
        mask = foreground_mask(truth[i], mask_threshold)
        rows.append((i + 1, method, "psnr", psnr(volumes[i], truth[i], mask)))
        if with_ssim:
            rows.append((i + 1, method, "ssim", ssim(volumes[i], truth[i], mask)))
    return rows


def mean_metric(rows, method: str, metric: str = "psnr") -> float:
    vals = [r[3] for r in rows if r[1] == method and r[2] == metric]
    return float(np.mean(vals))
