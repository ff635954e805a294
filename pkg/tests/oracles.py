"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code paths.
"""

import math

import numpy as np


def not_a_knot_spline(x, y, t):
    """Evaluate the not-a-knot interpolating cubic at ``t`` by solving the
    piecewise-polynomial coefficient system directly (4 unknowns per interval)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = len(x) - 1
    A = np.zeros((4 * n, 4 * n))
    rhs = np.zeros(4 * n)
    row = 0

    def basis(xx, x0, d=0):
        h = xx - x0
        if d == 0:
            return [1, h, h * h, h**3]
        if d == 1:
            return [0, 1, 2 * h, 3 * h * h]
        if d == 2:
            return [0, 0, 2, 6 * h]
        return [0, 0, 0, 6]

    for i in range(n):
        A[row, 4 * i : 4 * i + 4] = basis(x[i], x[i]); rhs[row] = y[i]; row += 1
        A[row, 4 * i : 4 * i + 4] = basis(x[i + 1], x[i]); rhs[row] = y[i + 1]; row += 1
    for i in range(n - 1):
        for d in (1, 2):
            A[row, 4 * i : 4 * i + 4] = basis(x[i + 1], x[i], d)
            A[row, 4 * (i + 1) : 4 * (i + 1) + 4] = -np.array(basis(x[i + 1], x[i + 1], d))
            row += 1
    # not-a-knot: third derivative continuous at the second and penultimate knots
    A[row, 0:4] = basis(x[1], x[0], 3); A[row, 4:8] = -np.array(basis(x[1], x[1], 3)); row += 1
    A[row, 4 * (n - 2) : 4 * (n - 1)] = basis(x[n - 1], x[n - 2], 3)
    A[row, 4 * (n - 1) : 4 * n] = -np.array(basis(x[n - 1], x[n - 1], 3)); row += 1
    c = np.linalg.solve(A, rhs)
    i = min(max(np.searchsorted(x, t) - 1, 0), n - 1)
    return float(np.dot(c[4 * i : 4 * i + 4], basis(t, x[i])))


def trilinear(data, p):
    """Zero-filled trilinear sample of ``data`` at fractional index ``p``."""
    base = np.floor(p).astype(int)
    frac = p - base
    total = 0.0
    for corner in np.ndindex(2, 2, 2):
        idx = base + np.array(corner)
        w = np.prod(np.where(corner, frac, 1 - frac))
        if np.all(idx >= 0) and np.all(idx < data.shape):
            total += w * data[tuple(idx)]
    return total


def psnr_ref(a, b, mask):
    d = a[mask].astype(float) - b[mask].astype(float)
    return 20 * math.log10(b[mask].max() / math.sqrt(np.mean(d * d)))


def gaussian_window(size=7, sigma=1.5):
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return g[:, None, None] * g[None, :, None] * g[None, None, :]


def ssim_ref(a, b, mask, size=7, sigma=1.5):
    """Voxel-by-voxel SSIM with an explicit 3D Gaussian window and
    half-sample symmetric padding.  Each window is renormalised over the
    mask voxels it covers."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    w0 = gaussian_window(size, sigma)
    r = size // 2
    pa = np.pad(a, r, mode="symmetric")
    pb = np.pad(b, r, mode="symmetric")
    pm = np.pad(np.asarray(mask, float), r, mode="symmetric")
    D = b[mask].max() - b[mask].min()
    c1, c2 = (0.01 * D) ** 2, (0.03 * D) ** 2
    vals = []
    for i, j, k in zip(*np.nonzero(mask)):
        wa = pa[i : i + size, j : j + size, k : k + size]
        wb = pb[i : i + size, j : j + size, k : k + size]
        w = w0 * pm[i : i + size, j : j + size, k : k + size]
        w = w / w.sum()
        ma, mb = (w * wa).sum(), (w * wb).sum()
        va = (w * (wa - ma) ** 2).sum()
        vb = (w * (wb - mb) ** 2).sum()
        cab = (w * (wa - ma) * (wb - mb)).sum()
        vals.append(((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))
