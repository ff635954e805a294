"""Masked PSNR/SSIM and the percentage of correct keypoints."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Volume

SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _arrays(a, b, mask):
    a = np.asarray(a.data if isinstance(a, Volume) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Volume) else b, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or mask.shape != a.shape:
        raise ValueError(f"shape mismatch: {a.shape}, {b.shape}, mask {mask.shape}")
    if not mask.any():
        raise ValueError("empty mask")
    return a, b, mask


def psnr(a, b, mask) -> float:
    """PSNR of ``a`` against reference ``b`` inside ``mask``.

    The peak is the maximum of ``b`` within the mask.  Identical inputs give
    ``math.inf``.
    """
    a, b, mask = _arrays(a, b, mask)
    mse = np.mean((a[mask] - b[mask]) ** 2)
    if mse == 0:
        return math.inf
    peak = b[mask].max()
    return float(10.0 * np.log10(peak**2 / mse))


def ssim(a, b, mask, data_range=None, two_d=False) -> float:
    """Mean SSIM over the mask with 7-wide Gaussian (sigma 1.5) windows.

    Window statistics only use voxels inside the mask and reflect at the
    volume boundary.  ``two_d=True`` filters only
    within each z-slice.  ``data_range`` defaults to the reference range
    inside the mask.
    """
    a, b, mask = _arrays(a, b, mask)
    if min(a.shape[:2] if two_d else a.shape) < SSIM_WINDOW:
        raise ValueError(f"volume {a.shape} smaller than the {SSIM_WINDOW}-voxel SSIM window")
    if data_range is None:
        data_range = b[mask].max() - b[mask].min()
    if data_range <= 0:
        data_range = 1.0
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    sigma = (SSIM_SIGMA, SSIM_SIGMA, 0.0) if two_d else SSIM_SIGMA
    truncate = (SSIM_WINDOW // 2) / SSIM_SIGMA

    def blur(x):
        return ndimage.gaussian_filter(x, sigma, mode="reflect", truncate=truncate)

    # Local statistics are weighted by the mask so that voxels outside it
    # never leak into a window.
    m = mask.astype(np.float64)
    norm = blur(m)
    norm[norm == 0] = 1.0

    def local_mean(x):
        return blur(x * m) / norm

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    smap = np.clip(num / den, -1.0, 1.0)
    return float(smap[mask].mean())


@dataclass(frozen=True)
class KeypointRecord:
    frame: int
    id: int
    position: tuple
    role: str

    def __post_init__(self):
        if self.role not in ("predicted", "truth"):
            raise ValueError(f"role must be 'predicted' or 'truth', got {self.role!r}")
        object.__setattr__(self, "position", tuple(float(p) for p in self.position))


def keypoint_errors(predicted, truth) -> np.ndarray:
    """Euclidean error (mm) for every truth record, matched by ``(frame, id)``."""
    pred = {(r.frame, r.id): np.asarray(r.position) for r in predicted}
    missing = [(r.frame, r.id) for r in truth if (r.frame, r.id) not in pred]
    if missing:
        raise ValueError(f"unmatched keypoints (frame, id): {missing}")
    return np.array([np.linalg.norm(pred[(r.frame, r.id)] - np.asarray(r.position)) for r in truth])


def pck(predicted, truth, thresholds) -> np.ndarray:
    """Percentage of keypoints with error strictly below each threshold."""
    err = keypoint_errors(predicted, truth)
    if len(err) == 0:
        raise ValueError("no keypoints to evaluate")
    thr = np.asarray(thresholds, dtype=float)
    return 100.0 * (err[None, :] < thr[:, None]).mean(axis=1)
