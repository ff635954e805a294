"""Interleaved multi-slice acquisition of a moving object.

Frames are numbered chronologically from 1.  Frame ``k`` is interleaved
subset ``i = (k - 1) % N_I + 1`` of stack ``j = (k - 1) // N_I + 1`` and
acquires the slices whose 0-based index is congruent to ``i - 1`` modulo
``N_I``.  Frame ``k`` starts at ``(k - 1) * T_stack / N_I`` and its slices
fire every ``T_stack / num_slices`` seconds in ascending z.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .motion import Trajectory, plane_at_time
from .volume import Volume, rician_magnitude, spline_along_axis


@dataclass(frozen=True)
class ScanProtocol:
    n_interleave: int = 2
    num_slices: int = 64
    slice_spacing_mm: float = 1.0
    in_plane_spacing_mm: float = 1.0
    stack_duration_s: float = 3.0
    num_stacks: int = 8

    def __post_init__(self):
        if self.n_interleave < 1:
            raise ValueError("n_interleave must be >= 1")
        if self.num_slices < self.n_interleave:
            raise ValueError("num_slices must be >= n_interleave")
        if self.num_stacks < 1:
            raise ValueError("num_stacks must be >= 1")
        if min(self.slice_spacing_mm, self.in_plane_spacing_mm, self.stack_duration_s) <= 0:
            raise ValueError("spacings and durations must be positive")

    @property
    def num_frames(self) -> int:
        return self.n_interleave * self.num_stacks

    @property
    def slice_interval_s(self) -> float:
        return self.stack_duration_s / self.num_slices

    @property
    def scan_duration_s(self) -> float:
        return self.num_stacks * self.stack_duration_s

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Frame:
    """One interleaved subset: slices stacked along the last axis."""

    slices: np.ndarray
    z_indices: tuple
    times: tuple
    frame_index: int
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        slices = np.array(self.slices, dtype=np.float32)
        if slices.ndim != 3:
            raise ValueError("frame slices must be stacked as (nx, ny, n_slices)")
        z = tuple(int(i) for i in self.z_indices)
        times = tuple(float(t) for t in self.times)
        if not slices.shape[2] == len(z) == len(times):
            raise ValueError("slices, z_indices and times must have equal length")
        if any(b <= a for a, b in zip(z, z[1:])):
            raise ValueError("z_indices must be strictly increasing")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("slice times must be ascending")
        slices.setflags(write=False)
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "z_indices", z)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def num_slices(self) -> int:
        return len(self.z_indices)

    def slice(self, z: int) -> np.ndarray:
        return self.slices[:, :, self.z_indices.index(z)]


def frame_index(subset_i: int, stack_j: int, n_interleave: int) -> int:
    """Chronological 1-based frame number of subset ``i`` in stack ``j``."""
    if not 1 <= subset_i <= n_interleave:
        raise ValueError(f"subset index {subset_i} outside [1, {n_interleave}]")
    if stack_j < 1:
        raise ValueError(f"stack index must be >= 1, got {stack_j}")
    return n_interleave * (stack_j - 1) + subset_i


def subset_of_frame(k: int, n_interleave: int) -> int:
    """0-based residue class acquired by frame ``k``."""
    return (k - 1) % n_interleave


def slice_subsets(num_slices: int, n_interleave: int) -> list[list[int]]:
    """Residue-class partition of ``range(num_slices)`` in acquisition order."""
    if not num_slices >= n_interleave >= 1:
        raise ValueError("need num_slices >= n_interleave >= 1")
    return [list(range(r, num_slices, n_interleave)) for r in range(n_interleave)]


def frame_start_time(k: int, protocol: ScanProtocol) -> float:
    return (k - 1) * protocol.stack_duration_s / protocol.n_interleave


def slice_time(k: int, z: int, protocol: ScanProtocol) -> float:
    """Acquisition time of slice ``z`` in frame ``k``.

    Also defined for slices the frame skips: it is the time the slice would
    have had on the frame's uniform schedule, which is what ground-truth and
    temporal-interpolation code use for missing slices.
    """
    r = subset_of_frame(k, protocol.n_interleave)
    return frame_start_time(k, protocol) + (z - r) / protocol.n_interleave * protocol.slice_interval_s


def acquire(static_v: Volume, traj: Trajectory, protocol: ScanProtocol) -> list[Frame]:
    """Simulate the interleaved scan of ``static_v`` moving along ``traj``."""
    if static_v.shape[2] != protocol.num_slices:
        raise ValueError(
            f"phantom has {static_v.shape[2]} slices, protocol expects {protocol.num_slices}"
        )
    end = protocol.scan_duration_s
    if traj.times[0] > 0 or traj.times[-1] < end - protocol.slice_interval_s:
        raise ValueError(f"trajectory too short: covers [{traj.times[0]}, {traj.times[-1]}], scan needs [0, {end}]")
    subsets = slice_subsets(protocol.num_slices, protocol.n_interleave)
    frames = []
    for k in range(1, protocol.num_frames + 1):
        z_idx = subsets[subset_of_frame(k, protocol.n_interleave)]
        times = [slice_time(k, z, protocol) for z in z_idx]
        planes = [plane_at_time(static_v, traj, t, z) for z, t in zip(z_idx, times)]
        frames.append(Frame(np.stack(planes, axis=2), z_idx, times, k, static_v.spacing, static_v.origin))
    return frames


def assemble_stack(frames: list[Frame], protocol: ScanProtocol) -> np.ndarray:
    """Interleave the slices of ``N_I`` frames by z-index into one full stack."""
    nx, ny = frames[0].slices.shape[:2]
    out = np.zeros((nx, ny, protocol.num_slices), dtype=np.float32)
    seen = np.zeros(protocol.num_slices, dtype=bool)
    for fr in frames:
        out[:, :, list(fr.z_indices)] = fr.slices
        seen[list(fr.z_indices)] = True
    if not seen.all():
        raise ValueError("frames do not cover every slice location")
    return out


def simulate_second_stage(frame_vol_t: Volume, protocol: ScanProtocol, k: int) -> Frame:
    """Re-acquire an interpolated, transposed frame volume along its z-axis.

    Keeps the planes of frame ``k``'s residue class; the object is frozen so
    slice times are all zero.
    """
    n_i = protocol.n_interleave
    nz = frame_vol_t.shape[2]
    if nz < n_i:
        raise ValueError(f"volume z-extent {nz} smaller than n_interleave {n_i}")
    z_idx = list(range(subset_of_frame(k, n_i), nz, n_i))
    return Frame(frame_vol_t.data[:, :, z_idx], z_idx, [0.0] * len(z_idx), k, frame_vol_t.spacing, frame_vol_t.origin)


def interpolate_second_stage(frame: Frame, nz: int) -> np.ndarray:
    """Spline-interpolate a second-stage frame back onto ``nz`` planes."""
    return spline_along_axis(frame.slices, frame.z_indices, np.arange(nz), axis=2).astype(np.float32)


def ground_truth_frame(static_v: Volume, traj: Trajectory, protocol: ScanProtocol, k: int) -> Volume:
    """The object as frame ``k`` would see it if every slice were acquired.

    Plane ``z`` is taken at :func:`slice_time` ``(k, z)``, so acquired planes
    match the frame exactly.
    """
    lo, hi = traj.times[0], traj.times[-1]
    planes = [
        plane_at_time(static_v, traj, float(np.clip(slice_time(k, z, protocol), lo, hi)), z)
        for z in range(protocol.num_slices)
    ]
    return static_v.with_data(np.stack(planes, axis=2))


def add_frame_noise(frames: list[Frame], sigma: float, seed: int) -> list[Frame]:
    """Rician noise of absolute std ``sigma`` on every acquired slice.

    Each frame draws from its own stream seeded by ``(seed, k)``.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return list(frames)
    out = []
    for fr in frames:
        rng = np.random.default_rng([seed, fr.frame_index])
        noisy = rician_magnitude(fr.slices, sigma, rng)
        out.append(Frame(noisy, fr.z_indices, fr.times, fr.frame_index, fr.spacing, fr.origin))
    return out
