"""Procedural head-like phantom used in place of an anatomical atlas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .motion import KeypointSet, pose_from_keypoints
from .volume import Volume


_DEFAULT_KP = ((-7.0, 12.0, 3.0), (7.0, 12.0, 3.0), (0.0, -4.0, -20.0))


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of :func:`generate_phantom`.

    Keypoints are given in mm relative to the volume centre.  Any left as
    ``None`` take a default placement that scales with the field of view
    (for a 64 mm cube: eyes at (+-7, 12, 3), shoulders at (0, -4, -20)).
    """

    shape: tuple = (64, 64, 64)
    spacing: tuple = (1.0, 1.0, 1.0)
    num_ellipsoids: int = 6
    texture_amplitude: float = 0.25
    smoothness_mm: float = 2.0
    eye_left: tuple | None = None
    eye_right: tuple | None = None
    shoulder_mid: tuple | None = None
    z_constant: bool = False
    seed: int = 0

    def __post_init__(self):
        if len(self.shape) != 3 or min(self.shape) < 16:
            raise ValueError(f"phantom shape must be at least 16^3, got {self.shape}")
        if self.num_ellipsoids < 0 or self.texture_amplitude < 0 or self.smoothness_mm <= 0:
            raise ValueError("invalid phantom parameters")

    @property
    def keypoints(self) -> KeypointSet:
        scale = (np.asarray(self.shape) - 1) * np.asarray(self.spacing, dtype=float) / 63.0
        given = (self.eye_left, self.eye_right, self.shoulder_mid)
        pts = [np.asarray(p, dtype=float) if p is not None else np.asarray(d) * scale for p, d in zip(given, _DEFAULT_KP)]
        return KeypointSet(*pts)

    @property
    def origin(self) -> tuple:
        """Physical origin placing the volume centre at (0, 0, 0)."""
        return tuple(-0.5 * (n - 1) * s for n, s in zip(self.shape, self.spacing))


def _ellipsoid(coords, centre, axes, rot):
    local = np.einsum("ij,j...->i...", rot.T, coords - centre[:, None, None, None])
    return sum((local[i] / axes[i]) ** 2 for i in range(3)) <= 1.0


def generate_phantom(spec: PhantomSpec = PhantomSpec()) -> tuple[Volume, KeypointSet]:
    """Nested ellipsoids with band-limited texture; background exactly zero.

    The first ellipsoid is the outer "head"; the others are placed inside
    it with random size, orientation and intensity.
    """
    shape = tuple(int(n) for n in spec.shape)
    spacing = np.asarray(spec.spacing, dtype=float)
    origin = np.asarray(spec.origin)
    extent = (np.asarray(shape) - 1) * spacing
    lo, hi = origin, origin + extent

    kp = spec.keypoints
    pts = kp.as_array()
    if np.any(pts < lo) or np.any(pts > hi):
        raise ValueError("keypoints outside the phantom field of view")
    pose_from_keypoints(kp)

    rng = np.random.default_rng(spec.seed)
    coords = np.stack(np.meshgrid(*[o + s * np.arange(n) for o, s, n in zip(origin, spacing, shape)], indexing="ij"))
    data = np.zeros(shape)
    inside = np.zeros(shape, dtype=bool)
    head_axes = 0.33 * extent
    for i in range(spec.num_ellipsoids):
        if i == 0:
            centre, axes, rot, value = np.zeros(3), head_axes, np.eye(3), 0.55
        else:
            axes = head_axes * rng.uniform(0.15, 0.5, size=3)
            centre = rng.uniform(-0.45, 0.45, size=3) * head_axes
            rot = Rotation.random(random_state=rng.integers(2**31)).as_matrix()
            value = rng.uniform(-0.35, 0.35)
        region = _ellipsoid(coords, centre, axes, rot)
        data[region] += value
        inside |= region

    if spec.texture_amplitude > 0 and inside.any():
        noise = rng.standard_normal(shape)
        tex = ndimage.gaussian_filter(noise, spec.smoothness_mm / spacing, mode="wrap")
        tex /= tex.std()
        data = data + spec.texture_amplitude * tex * inside
    data = np.where(inside, np.clip(data, 0.05, 1.0), 0.0)
    if spec.z_constant:
        # Every slice becomes a copy of the central one: an object that
        # interpolation along z reconstructs exactly.
        data = np.repeat(data[:, :, shape[2] // 2 : shape[2] // 2 + 1], shape[2], axis=2)
    return Volume(data, tuple(spacing), tuple(origin)), kp


def z_power_spectrum(v: Volume) -> tuple[np.ndarray, np.ndarray]:
    """Mean power along z versus frequency in cycles per voxel."""
    spec = np.abs(np.fft.rfft(v.data.astype(np.float64), axis=2)) ** 2
    freqs = np.fft.rfftfreq(v.shape[2])
    return freqs, spec.mean(axis=(0, 1))
