"""Training pairs from the simulated second-stage acquisition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume

DEFAULT_MIN_FOREGROUND = 0.05


@dataclass(frozen=True)
class PairMeta:
    k: int
    x: int
    row: int
    col: int


@dataclass(frozen=True, eq=False)
class PatchPair:
    """``lr`` is ``(2L+1, P, P)`` channel-first; ``hr`` is ``(P, P)``.

    The centre channel of ``lr`` is the target frame.  ``flips`` records the
    (row, col) axis reversals applied since extraction.
    """

    lr: np.ndarray
    hr: np.ndarray
    meta: PairMeta
    flips: tuple = (False, False)

    def __post_init__(self):
        if self.lr.ndim != 3 or self.lr.shape[0] % 2 != 1:
            raise ValueError("lr must be (2L+1, P, P)")
        if self.lr.shape[1:] != self.hr.shape or self.hr.shape[0] != self.hr.shape[1]:
            raise ValueError("lr and hr spatial shapes must both be P x P")


def context_radius(n_interleave: int) -> int:
    """Default temporal half-window ``L = N_I / 2`` (rounded half up for odd N_I)."""
    return int(np.floor(n_interleave / 2 + 0.5))


def temporal_window(k: int, L: int, num_frames: int) -> list[int]:
    """Frames ``k-L .. k+L`` clamped to ``[1, num_frames]``."""
    if not 1 <= k <= num_frames:
        raise ValueError(f"frame {k} outside [1, {num_frames}]")
    return [min(max(k + l, 1), num_frames) for l in range(-L, L + 1)]


def patch_offsets(size: int, P: int, stride: int) -> list[int]:
    """Regular offsets with a final patch flush against the far edge."""
    if P > size:
        raise ValueError(f"patch size {P} larger than plane extent {size}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    offs = list(range(0, size - P + 1, stride))
    if offs[-1] != size - P:
        offs.append(size - P)
    return offs


def extract_pairs(
    s_tilde_seq,
    f_tilde_t: Volume,
    k: int,
    L: int,
    P: int,
    stride: int,
    slabs=None,
    min_foreground: float = 0.0,
    foreground=None,
    target=None,
) -> list[PatchPair]:
    """Patch pairs for target frame ``k`` from its y-z planes.

    Parameters
    ----------
    s_tilde_seq : sequence of Volume or ndarray
        The ``2L+1`` interpolated second-stage volumes of the temporal window,
        in window order.
    f_tilde_t : Volume
        Transposed interpolated frame ``k`` (the high-resolution source).
    slabs : iterable of int, optional
        Slab indices (first axis) to use.  All slabs by default.
    min_foreground : float
        Drop patches whose foreground fraction is below this value.
    foreground : ndarray of bool, optional
        Foreground mask with the shape of ``f_tilde_t``.
    target : ndarray, optional
        Replacement high-resolution data (e.g. denoised), same shape as
        ``f_tilde_t``.
    """
    seq = [np.asarray(s.data if isinstance(s, Volume) else s) for s in s_tilde_seq]
    if len(seq) != 2 * L + 1:
        raise ValueError(f"expected {2 * L + 1} context volumes, got {len(seq)}")
    hr_src = np.asarray(f_tilde_t.data if target is None else target)
    for s in seq:
        if s.shape != hr_src.shape:
            raise ValueError("all volumes must share one shape")
    nx, ny, nz = hr_src.shape
    if P > min(ny, nz):
        raise ValueError(f"patch size {P} larger than plane {ny}x{nz}")
    rows = patch_offsets(ny, P, stride)
    cols = patch_offsets(nz, P, stride)
    stack = np.stack(seq)
    pairs = []
    for x in (range(nx) if slabs is None else slabs):
        for r in rows:
            for c in cols:
                if min_foreground > 0 and foreground is not None:
                    if foreground[x, r : r + P, c : c + P].mean() < min_foreground:
                        continue
                lr = np.array(stack[:, x, r : r + P, c : c + P], dtype=np.float32)
                hr = np.array(hr_src[x, r : r + P, c : c + P], dtype=np.float32)
                pairs.append(PatchPair(lr, hr, PairMeta(k, x, r, c)))
    return pairs


def _flip_arrays(lr, hr, flip_rows, flip_cols):
    if flip_rows:
        lr, hr = lr[..., ::-1, :], hr[..., ::-1, :]
    if flip_cols:
        lr, hr = lr[..., ::-1], hr[..., ::-1]
    return np.ascontiguousarray(lr), np.ascontiguousarray(hr)


def augment_flip(pair: PatchPair, seed: int | None = None, flips=None) -> PatchPair:
    """Randomly reverse each spatial axis with probability 1/2.

    ``flips=(rows, cols)`` forces the choice instead of drawing it.
    """
    if flips is None:
        flips = tuple(bool(b) for b in np.random.default_rng(seed).integers(0, 2, size=2))
    lr, hr = _flip_arrays(pair.lr, pair.hr, *flips)
    done = (pair.flips[0] ^ flips[0], pair.flips[1] ^ flips[1])
    return PatchPair(lr, hr, pair.meta, done)


def flip_batch(lr, hr, rng):
    """In-batch version of :func:`augment_flip` for ``(B, C, P, P)``/``(B, P, P)`` arrays."""
    lr = lr.copy()
    hr = hr.copy()
    choice = rng.integers(0, 2, size=(len(hr), 2)).astype(bool)
    for b, (fr, fc) in enumerate(choice):
        lr[b], hr[b] = _flip_arrays(lr[b], hr[b], fr, fc)
    return lr, hr


def stack_pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Canonically ordered ``(N, C, P, P)`` and ``(N, P, P)`` arrays."""
    if not pairs:
        raise ValueError("empty dataset")
    ordered = sorted(pairs, key=lambda p: (p.meta.k, p.meta.x, p.meta.row, p.meta.col))
    return np.stack([p.lr for p in ordered]), np.stack([p.hr for p in ordered])
