"""Network architectures: the noise-prediction UNet and the map classifiers.

Everything here is resolution-light so it trains on a CPU in minutes; the
classifier additionally offers a ResNet-50 configuration for full-scale runs.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .errors import ConfigError


class SinusoidalTimeEmbedding(nn.Module):
    """Classic sin/cos positional embedding over integer timesteps."""

    def __init__(self, dim: int):
        super().__init__()
        if dim % 2 != 0:
            raise ConfigError("time embedding dim must be even")
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
        )
        args = t.float()[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


def _groups_for(channels: int) -> int:
    g = 8
    while channels % g != 0:
        g //= 2
    return max(g, 1)


class ConvBlock(nn.Module):
    """Two 3x3 convs with GroupNorm/SiLU; timestep embedding added between."""

    def __init__(self, cin: int, cout: int, time_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm1 = nn.GroupNorm(_groups_for(cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups_for(cout), cout)
        self.time_proj = nn.Linear(time_dim, cout)
        self.act = nn.SiLU()

    def forward(self, x, temb):
        x = self.act(self.norm1(self.conv1(x)))
        x = x + self.time_proj(temb)[:, :, None, None]
        return self.act(self.norm2(self.conv2(x)))


class DenoiserUNet(nn.Module):
    """Small encoder-decoder noise predictor eps(x_t, t).

    Three downsampling and three upsampling stages with skip connections;
    input resolution must be divisible by 8.
    """

    def __init__(self, base_width: int = 32, time_dim: int = 128):
        super().__init__()
        w = base_width
        self.time_embed = nn.Sequential(
            SinusoidalTimeEmbedding(time_dim),
            nn.Linear(time_dim, time_dim),
            nn.SiLU(),
        )
        self.enc1 = ConvBlock(3, w, time_dim)
        self.enc2 = ConvBlock(w, 2 * w, time_dim)
        self.enc3 = ConvBlock(2 * w, 4 * w, time_dim)
        self.mid = ConvBlock(4 * w, 4 * w, time_dim)
        self.dec3 = ConvBlock(8 * w, 2 * w, time_dim)
        self.dec2 = ConvBlock(4 * w, w, time_dim)
        self.dec1 = ConvBlock(2 * w, w, time_dim)
        self.out = nn.Conv2d(w, 3, 1)
        self.pool = nn.AvgPool2d(2)
        self.up = nn.Upsample(scale_factor=2, mode="nearest")

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        temb = self.time_embed(t)
        h1 = self.enc1(x, temb)
        h2 = self.enc2(self.pool(h1), temb)
        h3 = self.enc3(self.pool(h2), temb)
        m = self.mid(self.pool(h3), temb)
        d3 = self.dec3(torch.cat([self.up(m), h3], dim=1), temb)
        d2 = self.dec2(torch.cat([self.up(d3), h2], dim=1), temb)
        d1 = self.dec1(torch.cat([self.up(d2), h1], dim=1), temb)
        return self.out(d1)


class SmallCNNClassifier(nn.Module):
    """Four conv blocks + global average pooling + single-logit head."""

    def __init__(self, base_width: int = 32):
        super().__init__()
        w = base_width
        widths = [w, 2 * w, 4 * w, 4 * w]
        layers: list[nn.Module] = []
        cin = 3
        for cout in widths:
            layers += [
                nn.Conv2d(cin, cout, 3, padding=1),
                nn.GroupNorm(_groups_for(cout), cout),
                nn.SiLU(),
                nn.MaxPool2d(2),
            ]
            cin = cout
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(widths[-1], 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.pool(self.features(x)).flatten(1)
        return self.head(h).squeeze(1)


def build_denoiser(arch_config: dict) -> nn.Module:
    arch = arch_config.get("arch", "unet_small")
    if arch != "unet_small":
        raise ConfigError(f"unknown denoiser arch {arch!r}")
    return DenoiserUNet(
        base_width=int(arch_config.get("base_width", 32)),
        time_dim=int(arch_config.get("time_dim", 128)),
    )


def build_classifier(arch_config: dict) -> nn.Module:
    arch = arch_config.get("arch", "small_cnn")
    if arch == "small_cnn":
        return SmallCNNClassifier(base_width=int(arch_config.get("base_width", 32)))
    if arch == "resnet50":
        # full-scale option; head replaced with a single-logit layer
        from torchvision.models import resnet50

        model = resnet50(weights=None)
        model.fc = nn.Linear(model.fc.in_features, 1)
        return _SqueezeLogit(model)
    raise ConfigError(f"unknown classifier arch {arch!r}")


class _SqueezeLogit(nn.Module):
    def __init__(self, inner: nn.Module):
        super().__init__()
        self.inner = inner

    def forward(self, x):
        return self.inner(x).squeeze(1)
