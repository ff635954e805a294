"""3D scalar volumes and the grid operations used throughout the toolkit.

A :class:`Volume` is an immutable float32 grid indexed ``[x, y, z]`` with a
physical spacing and origin in millimetres.  Index ``(i, j, k)`` sits at
physical position ``origin + spacing * (i, j, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import interpolate, ndimage

if TYPE_CHECKING:
    from .acquisition import Frame, ScanProtocol
    from .motion import RigidTransform

DEFAULT_MASK_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class Volume:
    """Immutable 3D grid with physical geometry.

    Parameters
    ----------
    data : array_like
        Intensities, shape ``(nx, ny, nz)``.  Stored as a read-only float32
        array.
    spacing : tuple of float
        Voxel size in mm along x, y, z.
    origin : tuple of float
        Physical position (mm) of voxel ``(0, 0, 0)``.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"volume shape must be >= 1 on every axis, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains NaN or Inf")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ValueError("spacing and origin must have 3 components")
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data) -> "Volume":
        """Same geometry, new intensities."""
        return Volume(data, self.spacing, self.origin)

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.origin == other.origin
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    def index_to_world(self, idx):
        return np.asarray(self.origin) + np.asarray(self.spacing) * np.asarray(idx, dtype=float)

    def world_to_index(self, pos):
        return (np.asarray(pos, dtype=float) - np.asarray(self.origin)) / np.asarray(self.spacing)


def spline_along_axis(samples, positions, targets, axis=-1):
    """Interpolating cubic spline through ``samples`` located at ``positions``.

    Uses not-a-knot end conditions (degree drops to ``len(positions) - 1``
    when fewer than four samples exist).  Targets outside the sample hull take
    the nearest edge sample.
    """
    samples = np.asarray(samples, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(positions)
    if n < 2:
        raise ValueError("degenerate frame: need at least 2 slices to interpolate")
    if np.any(np.diff(positions) <= 0):
        raise ValueError("slice positions must be strictly increasing")
    degree = min(3, n - 1)
    spline = interpolate.make_interp_spline(positions, samples, k=degree, axis=axis)
    clipped = np.clip(targets, positions[0], positions[-1])
    out = spline(clipped)
    # Exact reproduction of the knots; spline evaluation may round.
    out = np.moveaxis(out, axis, -1)
    src = np.moveaxis(samples, axis, -1)
    hit = np.searchsorted(positions, clipped)
    hit = np.minimum(hit, n - 1)
    on_knot = positions[hit] == clipped
    out[..., on_knot] = src[..., hit[on_knot]]
    return np.moveaxis(out, -1, axis)


def interpolate_frame(frame: "Frame", protocol: "ScanProtocol") -> Volume:
    """Cubic-spline upsample of one interleaved frame onto the full slice grid."""
    z = np.asarray(frame.z_indices)
    if len(z) < 2:
        raise ValueError("degenerate frame: need at least 2 slices to interpolate")
    full = np.arange(protocol.num_slices)
    data = spline_along_axis(frame.slices, z, full, axis=2)
    return Volume(data, frame.spacing, frame.origin)


def transpose_xz(v: Volume) -> Volume:
    """Swap the x and z axes: ``out[a, b, c] == v[c, b, a]``."""
    sx, sy, sz = v.spacing
    ox, oy, oz = v.origin
    return Volume(np.ascontiguousarray(v.data.transpose(2, 1, 0)), (sz, sy, sx), (oz, oy, ox))


def add_rician_noise(v: Volume, sigma_fraction: float, seed: int) -> Volume:
    """Magnitude (Rician) noise with std ``sigma_fraction * max(v)``.

    ``out = sqrt((x + n1)**2 + n2**2)`` with independent Gaussian ``n1, n2``.
    """
    if sigma_fraction < 0:
        raise ValueError(f"sigma_fraction must be >= 0, got {sigma_fraction}")
    if sigma_fraction == 0:
        return v
    sigma = sigma_fraction * float(v.data.max())
    rng = np.random.default_rng(seed)
    return v.with_data(rician_magnitude(v.data, sigma, rng))


def rician_magnitude(x, sigma: float, rng) -> np.ndarray:
    """``sqrt((x + n1)**2 + n2**2)`` for iid ``N(0, sigma**2)`` draws, clamped at 0."""
    x = np.asarray(x, dtype=np.float64)
    n1 = rng.normal(0.0, sigma, size=x.shape)
    n2 = rng.normal(0.0, sigma, size=x.shape)
    return np.maximum(np.sqrt((x + n1) ** 2 + n2**2), 0.0)


def foreground_mask(v, threshold_fraction: float = DEFAULT_MASK_THRESHOLD) -> np.ndarray:
    """Boolean mask of voxels brighter than ``threshold_fraction * max``."""
    if not 0 <= threshold_fraction < 1:
        raise ValueError(f"threshold_fraction must be in [0, 1), got {threshold_fraction}")
    data = v.data if isinstance(v, Volume) else np.asarray(v)
    mask = data > threshold_fraction * data.max()
    if not mask.any():
        raise ValueError("empty mask: no voxel above the background threshold")
    return mask


def _sample_points(v: Volume, transform: "RigidTransform", out_index) -> np.ndarray:
    """Trilinear samples of ``v`` at ``T^-1(p)`` for output voxel indices ``out_index`` (3, N)."""
    world = np.asarray(v.origin)[:, None] + np.asarray(v.spacing)[:, None] * out_index
    src = np.linalg.solve(transform.rotation, world - transform.translation[:, None])
    idx = (src - np.asarray(v.origin)[:, None]) / np.asarray(v.spacing)[:, None]
    return ndimage.map_coordinates(v.data, idx, order=1, mode="grid-constant", cval=0.0, prefilter=False)


def resample_affine(v: Volume, transform: "RigidTransform") -> Volume:
    """Resample ``v`` under ``transform``: ``out(p) = v(T^-1 p)``.

    Trilinear interpolation in physical coordinates, zero outside the field
    of view.
    """
    transform.check()
    grid = np.indices(v.shape, dtype=np.float64).reshape(3, -1)
    out = _sample_points(v, transform, grid).reshape(v.shape)
    return v.with_data(out)


def resample_plane(v: Volume, transform: "RigidTransform", z: int) -> np.ndarray:
    """The ``z`` plane of :func:`resample_affine` without resampling the rest."""
    transform.check()
    nx, ny, _ = v.shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    grid = np.stack([ii.ravel(), jj.ravel(), np.full(ii.size, z)]).astype(np.float64)
    return _sample_points(v, transform, grid).reshape(nx, ny).astype(np.float32)
