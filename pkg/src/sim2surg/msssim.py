"""Differentiable multi-scale structural similarity (MS-SSIM) on image brightness.

The metric doubles as a training loss that penalizes structural changes between
an image and its translation while staying indifferent to hue shifts: it is
computed on the per-pixel channel mean ("brightness") only.

Conventions used throughout:

* single images are ``H x W`` (grayscale) or ``H x W x 3`` (RGB), values in [0, 1];
* local statistics use Gaussian windows and are evaluated on the valid
  (non-padded) region only;
* the scale pyramid is built by blurring with the same Gaussian window
  (reflect padding) and keeping every second pixel.

All operations accept numpy arrays (returning floats) or torch tensors
(returning 0-dim tensors that participate in autograd).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

# Published default scale weights for the five-scale variant of the metric,
# normalized to sum exactly to 1 (the literature values add up to 1.0001).
_RAW_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
CANONICAL_SCALE_WEIGHTS = tuple(w / sum(_RAW_SCALE_WEIGHTS) for w in _RAW_SCALE_WEIGHTS)

# Per-scale means are clamped to this floor before exponentiation so the
# weighted geometric mean stays defined for adversarial inputs.
_MEAN_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianWindow:
    """Normalized 2-D Gaussian sampling window.

    ``weights`` sum to 1 and are symmetric under flips and transposition;
    they factor exactly into an outer product of the 1-D profile, which the
    filtering code exploits.
    """

    size: int
    sigma: float
    weights: np.ndarray = field(repr=False)

    def profile_1d(self) -> np.ndarray:
        """Normalized 1-D factor of the separable window."""
        half = (self.size - 1) / 2.0
        coords = np.arange(self.size, dtype=np.float64) - half
        g = np.exp(-(coords**2) / (2.0 * self.sigma**2))
        return g / g.sum()


@dataclass(frozen=True)
class SsimConstants:
    """Stabilization constants of the structural similarity terms."""

    dynamic_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("SSIM constants must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def gaussian_window(size: int, sigma: float) -> GaussianWindow:
    """Build a normalized, symmetric Gaussian window centered on the midpoint.

    Args:
        size: window side length in pixels, odd and >= 1.
        sigma: Gaussian standard deviation in pixels, > 0.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"window size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"window sigma must be positive, got {sigma}")
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    g /= g.sum()
    return GaussianWindow(size=size, sigma=sigma, weights=np.outer(g, g))


@dataclass(frozen=True, eq=False)
class MsSsimConfig:
    """Parameters of the multi-scale metric.

    ``scale_weights`` has one nonnegative entry per scale and sums to 1.
    Images must be at least ``window.size * 2**(num_scales - 1)`` pixels on
    each side; use :meth:`fit_to` to shrink the scale count for small inputs.
    """

    num_scales: int = 5
    scale_weights: tuple[float, ...] = CANONICAL_SCALE_WEIGHTS
    window: GaussianWindow = field(default_factory=lambda: gaussian_window(11, 1.5))
    constants: SsimConstants = SsimConstants()
    downsample_factor: int = 2

    def __post_init__(self):
        if self.num_scales < 1:
            raise ValueError("num_scales must be >= 1")
        if len(self.scale_weights) != self.num_scales:
            raise ValueError("need one scale weight per scale")
        if any(w < 0 for w in self.scale_weights):
            raise ValueError("scale weights must be nonnegative")
        if abs(sum(self.scale_weights) - 1.0) > 1e-9:
            raise ValueError("scale weights must sum to 1")

    def min_side(self) -> int:
        return self.window.size * self.downsample_factor ** (self.num_scales - 1)

    def fit_to(self, height: int, width: int) -> "MsSsimConfig":
        """Return a config whose coarsest scale still covers the window.

        Scales are dropped from the coarse end and the surviving weights are
        renormalized; meant for training at resolutions below 176 px where the
        five-scale default would not fit.
        """
        side = min(height, width)
        scales = self.num_scales
        while scales > 1 and side // self.downsample_factor ** (scales - 1) < self.window.size:
            scales -= 1
        if side < self.window.size:
            raise ValueError(
                f"images of size {height}x{width} are smaller than the "
                f"{self.window.size}-pixel window"
            )
        if scales == self.num_scales:
            return self
        kept = self.scale_weights[:scales]
        total = sum(kept)
        return MsSsimConfig(
            num_scales=scales,
            scale_weights=tuple(w / total for w in kept),
            window=self.window,
            constants=self.constants,
            downsample_factor=self.downsample_factor,
        )


def _to_tensor(image) -> tuple[torch.Tensor, bool]:
    """Coerce to a torch tensor, remembering whether the caller passed numpy."""
    if isinstance(image, torch.Tensor):
        return image, False
    return torch.as_tensor(np.asarray(image, dtype=np.float64)), True


def _kernels(window: GaussianWindow, dtype, device) -> tuple[torch.Tensor, torch.Tensor]:
    g = torch.as_tensor(window.profile_1d(), dtype=dtype, device=device)
    return g.view(1, 1, 1, -1), g.view(1, 1, -1, 1)


def _filter_valid(x: torch.Tensor, kr: torch.Tensor, kc: torch.Tensor) -> torch.Tensor:
    # x: N x 1 x H x W; separable valid-region filtering, no padding.
    return F.conv2d(F.conv2d(x, kr), kc)


def _blur_same(x: torch.Tensor, kr: torch.Tensor, kc: torch.Tensor, size: int) -> torch.Tensor:
    p = size // 2
    return _filter_valid(F.pad(x, (p, p, p, p), mode="reflect"), kr, kc)


def brightness(image):
    """Per-pixel arithmetic mean of the three channels: H x W x 3 -> H x W."""
    img, from_numpy = _to_tensor(image)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {tuple(img.shape)}")
    out = img.mean(dim=-1)
    return out.numpy() if from_numpy else out


def ssim_components(x, y, window: GaussianWindow, constants: SsimConstants = SsimConstants()):
    """Luminance and contrast-structure maps over the valid region.

    ``l = (2 mu_x mu_y + c1) / (mu_x^2 + mu_y^2 + c1)`` and
    ``cs = (2 sigma_xy + c2) / (sigma_x^2 + sigma_y^2 + c2)`` with
    Gaussian-windowed local statistics. Both maps have shape
    ``(H - size + 1) x (W - size + 1)``.
    """
    xt, x_np = _to_tensor(x)
    yt, y_np = _to_tensor(y)
    if xt.shape != yt.shape:
        raise ValueError(f"shape mismatch: {tuple(xt.shape)} vs {tuple(yt.shape)}")
    if xt.ndim != 2:
        raise ValueError("expected 2-D (H x W) inputs")
    if min(xt.shape) < window.size:
        raise ValueError(
            f"image of size {tuple(xt.shape)} is smaller than the {window.size}-pixel window"
        )
    l_map, cs_map = _components_batched(
        xt[None, None], yt[None, None], window, constants
    )
    l_map, cs_map = l_map[0, 0], cs_map[0, 0]
    if x_np and y_np:
        return l_map.numpy(), cs_map.numpy()
    return l_map, cs_map


def _components_batched(x, y, window, constants):
    kr, kc = _kernels(window, x.dtype, x.device)
    mu_x = _filter_valid(x, kr, kc)
    mu_y = _filter_valid(y, kr, kc)
    var_x = _filter_valid(x * x, kr, kc) - mu_x * mu_x
    var_y = _filter_valid(y * y, kr, kc) - mu_y * mu_y
    cov = _filter_valid(x * y, kr, kc) - mu_x * mu_y
    c1, c2 = constants.c1, constants.c2
    l_map = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs_map = (2.0 * cov + c2) / (var_x + var_y + c2)
    return l_map, cs_map


def ssim(x, y, window: GaussianWindow | None = None,
         constants: SsimConstants = SsimConstants()):
    """Single-scale SSIM: mean of the l * cs map over the valid region."""
    if window is None:
        window = gaussian_window(11, 1.5)
    l_map, cs_map = ssim_components(x, y, window, constants)
    value = (l_map * cs_map).mean()
    return float(value) if isinstance(value, np.floating) else value


def ms_ssim(x, y, config: MsSsimConfig = MsSsimConfig()):
    """Multi-scale SSIM of two single-channel images.

    Per scale the contrast-structure map is averaged; the luminance term
    enters at the coarsest scale only:

        MS-SSIM = mean(l_M)^w_M * prod_j mean(cs_j)^w_j

    The scale pyramid low-pass filters with the configured window (reflect
    padding) and subsamples by ``downsample_factor``. Raises if the images
    are too small for the configured number of scales.
    """
    xt, x_np = _to_tensor(x)
    yt, y_np = _to_tensor(y)
    if xt.shape != yt.shape:
        raise ValueError(f"shape mismatch: {tuple(xt.shape)} vs {tuple(yt.shape)}")
    if xt.ndim != 2:
        raise ValueError("expected 2-D (H x W) inputs")
    if min(xt.shape) < config.min_side():
        raise ValueError(
            f"images of size {tuple(xt.shape)} are too small for "
            f"{config.num_scales} scales (need >= {config.min_side()} per side)"
        )
    value = _ms_ssim_batched(xt[None, None], yt[None, None], config)[0]
    return float(value) if (x_np and y_np) else value


def _ms_ssim_batched(x: torch.Tensor, y: torch.Tensor, config: MsSsimConfig) -> torch.Tensor:
    window, constants = config.window, config.constants
    kr, kc = _kernels(window, x.dtype, x.device)
    factor = config.downsample_factor
    weights = config.scale_weights
    result = 1.0
    for j in range(config.num_scales):
        l_map, cs_map = _components_batched(x, y, window, constants)
        result = result * cs_map.mean(dim=(1, 2, 3)).clamp(min=_MEAN_FLOOR) ** weights[j]
        if j < config.num_scales - 1:
            x = _blur_same(x, kr, kc, window.size)[..., ::factor, ::factor]
            y = _blur_same(y, kr, kc, window.size)[..., ::factor, ::factor]
        else:
            result = result * l_map.mean(dim=(1, 2, 3)).clamp(min=_MEAN_FLOOR) ** weights[j]
    return result


def ms_ssim_loss(a, b, config: MsSsimConfig = MsSsimConfig()):
    """Structure loss ``1 - ms_ssim(brightness(a), brightness(b))``.

    Accepts a pair of ``H x W x 3`` images or batched ``N x 3 x H x W``
    tensors (batch entries are averaged). The scale count is fitted to the
    image size automatically, so the loss works at small training
    resolutions. Differentiable with respect to both inputs.
    """
    at, a_np = _to_tensor(a)
    bt, b_np = _to_tensor(b)
    if at.shape != bt.shape:
        raise ValueError(f"shape mismatch: {tuple(at.shape)} vs {tuple(bt.shape)}")
    if at.ndim == 3 and at.shape[-1] == 3:
        xa = at.mean(dim=-1)[None, None]
        xb = bt.mean(dim=-1)[None, None]
    elif at.ndim == 4 and at.shape[1] == 3:
        xa = at.mean(dim=1, keepdim=True)
        xb = bt.mean(dim=1, keepdim=True)
    else:
        raise ValueError(f"expected H x W x 3 or N x 3 x H x W inputs, got {tuple(at.shape)}")
    fitted = config.fit_to(xa.shape[-2], xa.shape[-1])
    value = 1.0 - _ms_ssim_batched(xa, xb, fitted).mean()
    return float(value) if (a_np and b_np) else value
