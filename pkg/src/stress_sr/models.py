"""The super-resolution network, the blind-spot denoiser, and their training loops."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import nn

from .sampling import flip_batch


@dataclass(frozen=True)
class SRConfig:
    """Hyperparameters of the super-resolution network and its training.

    Defaults are the full-scale settings (16 blocks, 64 channels, Adam at
    1e-4 for 30000 iterations, batch 64).
    """

    num_blocks: int = 16
    num_channels: int = 64
    in_channels: int = 3
    learning_rate: float = 1e-4
    iterations: int = 30000
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("num_blocks", "num_channels", "in_channels", "iterations", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"SRConfig.{name} must be >= 1")
        if self.in_channels % 2 != 1:
            raise ValueError("SRConfig.in_channels must be odd (2L+1)")
        if not self.learning_rate > 0:
            raise ValueError("SRConfig.learning_rate must be > 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BDNConfig:
    num_channels: int = 32
    num_layers: int = 8
    learning_rate: float = 1e-4
    iterations: int = 30000
    batch_size: int = 16
    patch_size: int = 64
    fusion_window: int = 7
    seed: int = 0

    def __post_init__(self):
        for name in ("num_channels", "num_layers", "iterations", "batch_size", "patch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"BDNConfig.{name} must be >= 1")
        if self.fusion_window < 0:
            raise ValueError("BDNConfig.fusion_window must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("BDNConfig.learning_rate must be > 0")

    def to_dict(self):
        return asdict(self)


class ResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv0 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.conv1(F.relu(self.conv0(x)))


class EDSR(nn.Module):
    """Same-resolution EDSR with a global skip from the centre input channel.

    The output convolution starts at zero, so an untrained network returns
    its centre channel unchanged.
    """

    def __init__(self, in_channels=3, num_channels=64, num_blocks=16):
        super().__init__()
        self.in_channels = in_channels
        self.head = nn.Conv2d(in_channels, num_channels, 3, padding=1)
        self.blocks = nn.Sequential(*[ResBlock(num_channels) for _ in range(num_blocks)])
        self.tail = nn.Conv2d(num_channels, 1, 3, padding=1)
        nn.init.zeros_(self.tail.weight)
        nn.init.zeros_(self.tail.bias)

    def forward(self, x):
        centre = x[:, self.in_channels // 2 : self.in_channels // 2 + 1]
        return centre + self.tail(self.blocks(self.head(x)))


class UpConv(nn.Module):
    """3x3 convolution whose receptive field covers only the current row and rows above."""

    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3)

    def forward(self, x):
        return self.conv(F.pad(x, (1, 1, 2, 0), mode="replicate"))


class BlindSpotNet(nn.Module):
    """Denoiser whose output at a pixel never sees the input at that pixel.

    Four rotated copies of an upward-looking branch (shared weights), each
    shifted down one row so it sees strictly the rows above, are merged by
    1x1 convolutions.  The row shifted in at the image edge holds a learned
    per-channel value instead of zeros, so border pixels are not forced to
    see an artificial dark frame.
    """

    def __init__(self, num_channels=32, num_layers=8):
        super().__init__()
        layers = [UpConv(1, num_channels)]
        layers += [UpConv(num_channels, num_channels) for _ in range(num_layers - 1)]
        self.branch = nn.ModuleList(layers)
        self.merge0 = nn.Conv2d(4 * num_channels, num_channels, 1)
        self.merge1 = nn.Conv2d(num_channels, 1, 1)
        self.edge = nn.Parameter(torch.zeros(1, num_channels, 1, 1))

    def _half_plane(self, x):
        for layer in self.branch:
            x = F.leaky_relu(layer(x), 0.1)
        edge = self.edge.expand(x.shape[0], -1, 1, x.shape[3])
        return torch.cat([edge, x[:, :, :-1]], dim=2)

    def forward(self, x):
        parts = []
        for rot in range(4):
            y = self._half_plane(torch.rot90(x, rot, dims=(2, 3)))
            parts.append(torch.rot90(y, -rot, dims=(2, 3)))
        y = F.leaky_relu(self.merge0(torch.cat(parts, dim=1)), 0.1)
        return self.merge1(y)


def build_sr(config: SRConfig) -> EDSR:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return EDSR(config.in_channels, config.num_channels, config.num_blocks)


def build_bdn(config: BDNConfig) -> BlindSpotNet:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return BlindSpotNet(config.num_channels, config.num_layers)


@torch.no_grad()
def sr_forward(net: EDSR, lr_patch, batch_size: int = 64) -> np.ndarray:
    """Apply the SR network to ``(C, H, W)`` or ``(B, C, H, W)`` input."""
    x = np.array(lr_patch, dtype=np.float32)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != net.in_channels:
        raise ValueError(f"expected {net.in_channels} input channels, got shape {x.shape}")
    net.eval()
    out = [net(torch.from_numpy(x[i : i + batch_size])).numpy()[:, 0] for i in range(0, len(x), batch_size)]
    out = np.concatenate(out)
    return out[0] if single else out


BDN_MIN_SIZE = 2


@torch.no_grad()
def bdn_forward(net: BlindSpotNet, image, batch_size: int = 16) -> np.ndarray:
    """Denoise ``(H, W)`` or ``(B, H, W)`` images."""
    x = np.array(image, dtype=np.float32)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected (H, W) or (B, H, W) images, got shape {x.shape}")
    if min(x.shape[1:]) < BDN_MIN_SIZE:
        raise ValueError(f"image {x.shape[1:]} smaller than the blind-spot receptive field")
    net.eval()
    out = [net(torch.from_numpy(x[i : i + batch_size, None])).numpy()[:, 0] for i in range(0, len(x), batch_size)]
    out = np.concatenate(out)
    return out[0] if single else out


def estimate_noise_sigma(images, start_quantile: float = 0.05, max_iter: int = 500) -> float:
    """Rician noise level from the empty background of magnitude images.

    Zero-signal voxels follow a Rayleigh law, for which
    ``E[y^2 | y < 2 s] = k s^2`` with a known constant ``k``.  Starting from
    a low quantile of all voxels, the estimate is iterated through that
    relation; from below the iteration climbs monotonically to the
    background level.  Needs a tenth or more of the field of view empty.
    """
    v = np.sort(np.asarray(images, dtype=np.float64).ravel())
    sigma = float(np.quantile(v, start_quantile))
    if not sigma > 0:
        return 0.0
    c = 2.0
    tail = np.exp(-c * c / 2)
    k = 2.0 * (1.0 - (c * c / 2) * tail / (1.0 - tail))
    csum = np.concatenate([[0.0], np.cumsum(v * v)])
    for _ in range(max_iter):
        n = int(np.searchsorted(v, c * sigma))
        new = float(np.sqrt(csum[n] / n / k))
        if abs(new - sigma) <= 1e-7 * sigma:
            return new
        sigma = new
    return sigma


def bdn_denoise(net: BlindSpotNet, image, sigma: float, window: int = 7) -> np.ndarray:
    """Blind-spot prediction fused with the observed pixel.

    The network sees only the neighbours of a pixel, so its output ``mu`` is
    a prior for that pixel.  Treating the prior as Gaussian with a local
    variance ``p2`` (residual energy over a ``window`` box minus the noise
    variance) gives the posterior mean ``mu + p2 / (p2 + sigma^2) * (y - mu)``.
    ``window=0`` or ``sigma=0`` returns the plain blind-spot output.
    """
    y = np.array(image, dtype=np.float32)
    mu = bdn_forward(net, y)
    if window == 0 or sigma <= 0:
        return mu
    size = (window, window) if y.ndim == 2 else (1, window, window)
    r2 = ndimage.uniform_filter((y - mu).astype(np.float64) ** 2, size=size, mode="reflect")
    s2 = float(sigma) ** 2
    p2 = np.maximum(r2 - s2, 0.0)
    return (mu + p2 / (p2 + s2) * (y - mu)).astype(np.float32)


def l1_loss(pred, target):
    return (pred - target).abs().mean()


def mse_loss(pred, target):
    return ((pred - target) ** 2).mean()


def _batches(rng, n, batch_size):
    """Endless canonical stream of index batches, reshuffled every epoch."""
    while True:
        order = rng.permutation(n)
        if n < batch_size:
            order = np.resize(order, batch_size)
        for i in range(0, len(order) - batch_size + 1, batch_size):
            yield order[i : i + batch_size]


def train_sr(lr, hr, config: SRConfig, bdn: BlindSpotNet | None = None, log_every: int = 0, log=print):
    """Train the SR network with an L1 loss.

    Parameters
    ----------
    lr, hr : ndarray
        ``(N, 2L+1, P, P)`` inputs and ``(N, P, P)`` targets.
    bdn : BlindSpotNet, optional
        Frozen denoiser; when given the targets become ``bdn(hr)``.

    Returns
    -------
    net : EDSR
    history : list of float
        Loss at every step.
    """
    lr = np.asarray(lr, dtype=np.float32)
    hr = np.asarray(hr, dtype=np.float32)
    if len(lr) == 0 or len(hr) == 0:
        raise ValueError("empty dataset")
    if lr.shape[1] != config.in_channels:
        raise ValueError(f"dataset has {lr.shape[1]} channels, config expects {config.in_channels}")
    if bdn is not None:
        for p in bdn.parameters():
            p.requires_grad_(False)
        hr = bdn_forward(bdn, hr)
    net = build_sr(config)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    stream = _batches(rng, len(lr), config.batch_size)
    history = []
    for step in range(config.iterations):
        idx = next(stream)
        xb, yb = flip_batch(lr[idx], hr[idx], rng)
        loss = l1_loss(net(torch.from_numpy(xb)), torch.from_numpy(yb[:, None]))
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.item()))
        if log_every and (step + 1) % log_every == 0:
            log(f"sr step {step + 1}/{config.iterations} loss {np.mean(history[-log_every:]):.5f}")
    net.eval()
    return net, history


def _random_crops(images, rng, batch_size, P):
    n, h, w = images.shape
    idx = rng.integers(0, n, size=batch_size)
    rows = rng.integers(0, h - P + 1, size=batch_size)
    cols = rng.integers(0, w - P + 1, size=batch_size)
    return np.stack([images[i, r : r + P, c : c + P] for i, r, c in zip(idx, rows, cols)])


def train_bdn(images, config: BDNConfig, log_every: int = 0, log=print):
    """Train the blind-spot denoiser to reproduce its own noisy input (MSE).

    ``images`` is ``(N, H, W)``; training draws random ``patch_size`` crops
    (the whole image when smaller) with random flips.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 3 or len(images) == 0:
        raise ValueError("empty dataset")
    P = min(config.patch_size, *images.shape[1:])
    net = build_bdn(config)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = []
    for step in range(config.iterations):
        crops = _random_crops(images, rng, config.batch_size, P)
        crops, _ = flip_batch(crops, crops, rng)
        x = torch.from_numpy(crops[:, None])
        loss = mse_loss(net(x), x)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.item()))
        if log_every and (step + 1) % log_every == 0:
            log(f"bdn step {step + 1}/{config.iterations} loss {np.mean(history[-log_every:]):.6f}")
    net.eval()
    return net, history


def state_arrays(net: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in net.state_dict().items()}


def load_arrays(net: nn.Module, arrays: dict[str, np.ndarray]) -> nn.Module:
    state = {k: torch.from_numpy(np.array(v, dtype=np.float32)) for k, v in arrays.items()}
    net.load_state_dict(state)
    net.eval()
    return net


@dataclass
class ModelBundle:
    sr: EDSR
    sr_config: SRConfig
    bdn: BlindSpotNet | None = None
    bdn_config: BDNConfig | None = None
    sr_loss: list = field(default_factory=list)
    bdn_loss: list = field(default_factory=list)
    noise_sigma: float = 0.0  # estimated noise level used when fusing the denoiser output

    def __post_init__(self):
        if (self.bdn is None) != (self.bdn_config is None):
            raise ValueError("bdn weights and bdn config must be given together")

    @property
    def context_radius(self) -> int:
        return self.sr_config.in_channels // 2


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def receptive_margin(config: SRConfig) -> int:
    """Half-width of the SR network's receptive field in pixels."""
    return 2 * config.num_blocks + 2


__all__ = [
    "SRConfig",
    "BDNConfig",
    "EDSR",
    "BlindSpotNet",
    "ModelBundle",
    "build_sr",
    "build_bdn",
    "sr_forward",
    "bdn_forward",
    "bdn_denoise",
    "estimate_noise_sigma",
    "train_sr",
    "train_bdn",
    "l1_loss",
    "mse_loss",
    "state_arrays",
    "load_arrays",
    "receptive_margin",
]
