"""Asymmetric content/style translation networks.

The rendered domain A is assumed style-free: its encoder extracts content
only and its decoder takes no style input. The real domain B is modeled with
a content code plus a low-dimensional style vector that modulates the B
decoder through adaptive instance normalization. Discriminators are
multi-scale patch classifiers trained with a least-squares objective.

All images crossing the module boundary are ``N x 3 x H x W`` tensors with
values in [0, 1]; content codes are ``N x C_c x h x w`` feature grids and
style codes are ``N x d_s`` vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

INSTANCE_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters shared by all six networks."""

    image_channels: int = 3
    base_width: int = 32
    n_downsample: int = 2
    n_res: int = 4
    style_dim: int = 8
    style_downsample: int = 3
    mlp_width: int = 64
    disc_base_width: int = 32
    disc_layers: int = 4
    disc_scales: int = 3

    @property
    def content_channels(self) -> int:
        return self.base_width * 2**self.n_downsample


def adain(features, gain, bias, eps: float = INSTANCE_NORM_EPS):
    """Adaptive instance normalization.

    Each channel is normalized to zero mean / unit variance over its spatial
    extent (eps guards constant channels), then scaled by ``gain`` and
    shifted by ``bias``. Accepts ``C x H x W`` with per-channel parameters of
    shape ``(C,)`` or batched ``N x C x H x W`` with ``(N, C)`` parameters.
    """
    unbatched = features.ndim == 3
    if unbatched:
        features, gain, bias = features[None], gain[None], bias[None]
    if features.ndim != 4 or gain.shape != features.shape[:2] or bias.shape != features.shape[:2]:
        raise ValueError(
            f"channel mismatch: features {tuple(features.shape)}, "
            f"gain {tuple(gain.shape)}, bias {tuple(bias.shape)}"
        )
    mean = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), unbiased=False, keepdim=True)
    normed = (features - mean) / torch.sqrt(var + eps)
    out = gain[:, :, None, None] * normed + bias[:, :, None, None]
    return out[0] if unbatched else out


def sample_style(rng: torch.Generator | None, style_dim: int, batch: int = 1) -> torch.Tensor:
    """Draw ``batch`` independent standard-normal style vectors."""
    if style_dim < 1:
        raise ValueError("style_dim must be >= 1")
    return torch.randn((batch, style_dim), generator=rng)


class ConvBlock(nn.Module):
    """Reflect-padded conv with optional normalization and activation."""

    def __init__(self, cin, cout, kernel, stride=1, norm="none", activation="relu"):
        super().__init__()
        self.pad = nn.ReflectionPad2d((kernel - 1) // 2)
        self.conv = nn.Conv2d(cin, cout, kernel, stride)
        if norm == "in":
            self.norm = nn.InstanceNorm2d(cout, eps=INSTANCE_NORM_EPS)
        elif norm == "ln":
            self.norm = nn.GroupNorm(1, cout, eps=INSTANCE_NORM_EPS)
        elif norm == "none":
            self.norm = None
        else:
            raise ValueError(f"unknown norm {norm!r}")
        if activation == "relu":
            self.activation = nn.ReLU(inplace=True)
        elif activation == "lrelu":
            self.activation = nn.LeakyReLU(0.2, inplace=True)
        elif activation == "none":
            self.activation = None
        else:
            raise ValueError(f"unknown activation {activation!r}")

    def forward(self, x):
        x = self.conv(self.pad(x))
        if self.norm is not None:
            x = self.norm(x)
        if self.activation is not None:
            x = self.activation(x)
        return x


class ResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.block = nn.Sequential(
            ConvBlock(channels, channels, 3, norm="in", activation="relu"),
            ConvBlock(channels, channels, 3, norm="in", activation="none"),
        )

    def forward(self, x):
        return x + self.block(x)


class AdainResBlock(nn.Module):
    """Residual block whose two convs are followed by externally driven AdaIN."""

    PARAM_GROUPS = 4  # gain+bias for each of the two convs

    def __init__(self, channels):
        super().__init__()
        self.conv1 = ConvBlock(channels, channels, 3, norm="none", activation="none")
        self.conv2 = ConvBlock(channels, channels, 3, norm="none", activation="none")

    def forward(self, x, params):
        g1, b1, g2, b2 = params
        h = F.relu(adain(self.conv1(x), g1, b1))
        h = adain(self.conv2(h), g2, b2)
        return x + h


class ContentEncoder(nn.Module):
    """Stem, strided downsampling, and residual trunk producing a content grid."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        width = config.base_width
        layers = [ConvBlock(config.image_channels, width, 7, norm="in")]
        for _ in range(config.n_downsample):
            layers.append(ConvBlock(width, width * 2, 4, stride=2, norm="in"))
            width *= 2
        layers.extend(ResBlock(width) for _ in range(config.n_res))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class StyleBranch(nn.Module):
    """Global style summary: strided convs, average pool, projection to d_s."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        width = config.base_width
        layers = [ConvBlock(config.image_channels, width, 7)]
        for _ in range(3):
            layers.append(ConvBlock(width, width * 2, 4, stride=2))
            width *= 2
        layers.append(nn.AdaptiveAvgPool2d(1))
        layers.append(nn.Conv2d(width, config.style_dim, 1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x).flatten(1)


class StyleMlp(nn.Module):
    """Maps a style vector to per-channel (gain, bias) pairs for every AdaIN."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        channels = config.content_channels
        n_params = config.n_res * AdainResBlock.PARAM_GROUPS * channels
        self.channels = channels
        self.model = nn.Sequential(
            nn.Linear(config.style_dim, config.mlp_width),
            nn.ReLU(inplace=True),
            nn.Linear(config.mlp_width, config.mlp_width),
            nn.ReLU(inplace=True),
            nn.Linear(config.mlp_width, n_params),
        )

    def forward(self, style):
        raw = self.model(style).view(style.shape[0], -1, 2, self.channels)
        # raw[..., 0, :] -> gain offset around 1, raw[..., 1, :] -> bias
        groups = []
        for block in range(raw.shape[1] // 2):
            for conv in range(2):
                gain = 1.0 + raw[:, 2 * block + conv, 0]
                bias = raw[:, 2 * block + conv, 1]
                groups.append((gain, bias))
        return groups


class DecoderA(nn.Module):
    """Style-free decoder: residual trunk, upsampling, tanh squashed to [0, 1]."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        width = config.content_channels
        layers = [ResBlock(width) for _ in range(config.n_res)]
        for _ in range(config.n_downsample):
            layers.append(nn.Upsample(scale_factor=2, mode="nearest"))
            layers.append(ConvBlock(width, width // 2, 5, norm="ln"))
            width //= 2
        layers.append(ConvBlock(width, config.image_channels, 7, norm="none", activation="none"))
        self.model = nn.Sequential(*layers)

    def forward(self, content):
        return (torch.tanh(self.model(content)) + 1.0) / 2.0


class DecoderB(nn.Module):
    """Style-conditioned decoder: AdaIN residual trunk driven by the style MLP."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        width = config.content_channels
        self.mlp = StyleMlp(config)
        self.res_blocks = nn.ModuleList(AdainResBlock(width) for _ in range(config.n_res))
        layers = []
        for _ in range(config.n_downsample):
            layers.append(nn.Upsample(scale_factor=2, mode="nearest"))
            layers.append(ConvBlock(width, width // 2, 5, norm="ln"))
            width //= 2
        layers.append(ConvBlock(width, config.image_channels, 7, norm="none", activation="none"))
        self.tail = nn.Sequential(*layers)

    def forward(self, content, style):
        params = self.mlp(style)
        h = content
        for i, block in enumerate(self.res_blocks):
            h = block(h, params[2 * i] + params[2 * i + 1])
        return (torch.tanh(self.tail(h)) + 1.0) / 2.0


class PatchDiscriminator(nn.Module):
    def __init__(self, config: ArchConfig):
        super().__init__()
        width = config.disc_base_width
        layers = [ConvBlock(config.image_channels, width, 4, stride=2, activation="lrelu")]
        for _ in range(config.disc_layers - 1):
            layers.append(ConvBlock(width, width * 2, 4, stride=2, activation="lrelu"))
            width *= 2
        layers.append(nn.Conv2d(width, 1, 1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class MultiScaleDiscriminator(nn.Module):
    """Patch discriminators applied to an average-pool pyramid of the input."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.scales = nn.ModuleList(PatchDiscriminator(config) for _ in range(config.disc_scales))

    def forward(self, x):
        outputs = []
        for disc in self.scales:
            outputs.append(disc(x))
            x = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
        return outputs


class TranslationModel(nn.Module):
    """Container for the six networks plus the encode/decode/translate surface.

    The asymmetry is structural: there is no style extraction for domain A
    images and :meth:`decode_a` accepts only a content grid, so trying to
    style-condition the A decoder is a ``TypeError`` rather than an ignored
    argument.
    """

    def __init__(self, config: ArchConfig | None = None):
        super().__init__()
        self.config = config or ArchConfig()
        self.encoder_a = ContentEncoder(self.config)
        self.encoder_b_content = ContentEncoder(self.config)
        self.encoder_b_style = StyleBranch(self.config)
        self.decoder_a = DecoderA(self.config)
        self.decoder_b = DecoderB(self.config)
        self.discriminator_a = MultiScaleDiscriminator(self.config)
        self.discriminator_b = MultiScaleDiscriminator(self.config)

    # -- parameter groups ---------------------------------------------------

    def generator_parameters(self):
        return itertools.chain(
            self.encoder_a.parameters(),
            self.encoder_b_content.parameters(),
            self.encoder_b_style.parameters(),
            self.decoder_a.parameters(),
            self.decoder_b.parameters(),
        )

    def discriminator_parameters(self):
        return itertools.chain(
            self.discriminator_a.parameters(),
            self.discriminator_b.parameters(),
        )

    # -- encoding / decoding ------------------------------------------------

    def _check_image(self, image):
        if image.ndim != 4 or image.shape[1] != self.config.image_channels:
            raise ValueError(
                f"expected N x {self.config.image_channels} x H x W images, "
                f"got shape {tuple(image.shape)}"
            )
        factor = 2**self.config.n_downsample
        if image.shape[2] % factor or image.shape[3] % factor:
            raise ValueError(
                f"image size {image.shape[2]}x{image.shape[3]} not divisible "
                f"by the downsampling factor {factor}"
            )

    def _noised(self, image, noise_sigma, training, rng):
        if not training or noise_sigma <= 0:
            return image
        noise = torch.randn(image.shape, generator=rng, dtype=image.dtype)
        return image + noise_sigma * noise

    def encode_a(self, image, noise_sigma=0.0, training=False, rng=None):
        """Content grid of a domain-A image; Gaussian input noise in training."""
        self._check_image(image)
        return self.encoder_a(self._noised(image, noise_sigma, training, rng) * 2.0 - 1.0)

    def encode_b(self, image, noise_sigma=0.0, training=False, rng=None):
        """(content, style) of a domain-B image; Gaussian input noise in training."""
        self._check_image(image)
        x = self._noised(image, noise_sigma, training, rng) * 2.0 - 1.0
        return self.encoder_b_content(x), self.encoder_b_style(x)

    def decode_a(self, content):
        """Decode a content grid into domain A; no style input exists."""
        return self.decoder_a(content)

    def decode_b(self, content, style):
        """Decode a content grid with a style vector into domain B."""
        if style.ndim != 2 or style.shape[1] != self.config.style_dim:
            raise ValueError(
                f"expected style of length {self.config.style_dim}, got shape {tuple(style.shape)}"
            )
        return self.decoder_b(content, style)

    # -- translation --------------------------------------------------------

    def sample_style(self, rng=None, batch=1):
        return sample_style(rng, self.config.style_dim, batch)

    def translate_a_to_b(self, image_a, style="sample", rng=None, reference=None):
        """Translate A -> B with an explicit, sampled, or reference-derived style.

        ``style`` is a style tensor, the string ``"sample"`` (draw from the
        prior using ``rng``), or the string ``"reference"`` (extract the style
        from the ``reference`` domain-B image).
        """
        with torch.no_grad():
            content = self.encode_a(image_a)
            if isinstance(style, str):
                if style == "sample":
                    style = self.sample_style(rng, batch=image_a.shape[0])
                elif style == "reference":
                    if reference is None:
                        raise ValueError("style='reference' requires a reference image")
                    style = self.encode_b(reference)[1]
                    if style.shape[0] == 1 and image_a.shape[0] > 1:
                        style = style.expand(image_a.shape[0], -1)
                else:
                    raise ValueError(f"unknown style mode {style!r}")
            return self.decode_b(content, style)

    def translate_b_to_a(self, image_b):
        """Translate B -> A; deterministic (content only, no style)."""
        with torch.no_grad():
            content, _ = self.encode_b(image_b)
            return self.decode_a(content)
