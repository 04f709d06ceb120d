"""Generator and discriminator.

The generator is U-shaped: downsampling residual blocks that end in a
positional normalization (exporting per-position moments over skip
connections), a bottleneck, and upsampling residual blocks modulated by
SPAdaIN on the resized LR target plus a dynamic moment shortcut per scale.

The discriminator follows the StarGAN-v2 family without domain heads; the
LR difference map is concatenated onto the feature map whose spatial size
equals the LR resolution, and a single logit per sample comes out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .imaging import resize_bilinear
from .norms import DynamicMomentShortcut, MomentPair, SNConv2d, SPAdaIN, instance_norm, pono


@dataclass
class GeneratorSpec:
    hr_size: int = 128
    lr_size: int = 8
    base_channels: int = 64
    max_channels: int = 512
    num_scales: int = 4
    bottleneck_blocks: int = 2
    img_channels: int = 3

    def __post_init__(self):
        if self.hr_size & (self.hr_size - 1):
            raise ValueError(f"hr_size must be a power of two, got {self.hr_size}")
        if self.hr_size % self.lr_size:
            raise ValueError(f"lr_size {self.lr_size} must divide hr_size {self.hr_size}")
        if self.hr_size // 2**self.num_scales < 4:
            raise ValueError(
                f"bottleneck would be {self.hr_size // 2 ** self.num_scales}, need >= 4"
            )

    def channels_at(self, scale: int) -> int:
        return min(self.base_channels * 2**scale, self.max_channels)


@dataclass
class DiscriminatorSpec:
    hr_size: int = 128
    lr_size: int = 8
    base_channels: int = 64
    max_channels: int = 512
    img_channels: int = 3

    def __post_init__(self):
        if self.lr_size < 4 or self.hr_size % self.lr_size or self.lr_size >= self.hr_size:
            raise ValueError(
                f"lr_size {self.lr_size} must be >= 4 and a proper divisor of {self.hr_size}"
            )


class PonoResBlock(nn.Module):
    """Downsampling residual block ending in positional normalization."""

    def __init__(self, dim_in: int, dim_out: int, downsample: bool = True):
        super().__init__()
        self.downsample = downsample
        self.conv1 = SNConv2d(dim_in, dim_in, 3, padding=1)
        self.conv2 = SNConv2d(dim_in, dim_out, 3, padding=1)
        self.skip = SNConv2d(dim_in, dim_out, 1, bias=False) if dim_in != dim_out else None

    def _shortcut(self, x):
        if self.skip is not None:
            x = self.skip(x)
        if self.downsample:
            x = F.avg_pool2d(x, 2)
        return x

    def _residual(self, x):
        x = instance_norm(x)
        x = F.leaky_relu(x, 0.2)
        x = self.conv1(x)
        if self.downsample:
            x = F.avg_pool2d(x, 2)
        x = instance_norm(x)
        x = F.leaky_relu(x, 0.2)
        x = self.conv2(x)
        return x

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Block output before the positional normalization."""
        return (self._residual(x) + self._shortcut(x)) / math.sqrt(2)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, MomentPair]:
        return pono(self.features(x))


class ResBlock(nn.Module):
    """Plain pre-activation residual block (bottleneck, no moment export)."""

    def __init__(self, dim: int):
        super().__init__()
        self.conv1 = SNConv2d(dim, dim, 3, padding=1)
        self.conv2 = SNConv2d(dim, dim, 3, padding=1)

    def forward(self, x):
        h = self.conv1(F.leaky_relu(instance_norm(x), 0.2))
        h = self.conv2(F.leaky_relu(instance_norm(h), 0.2))
        return (x + h) / math.sqrt(2)


class SpadainResBlock(nn.Module):
    """Upsampling residual block: SPAdaIN conditioning on the resized LR
    target, followed by a dynamic moment shortcut when moments are given."""

    def __init__(
        self,
        dim_in: int,
        dim_out: int,
        cond_channels: int = 3,
        upsample: bool = True,
        with_moments: bool = True,
    ):
        super().__init__()
        self.upsample = upsample
        self.norm1 = SPAdaIN(dim_in, cond_channels)
        self.norm2 = SPAdaIN(dim_out, cond_channels)
        self.conv1 = SNConv2d(dim_in, dim_out, 3, padding=1)
        self.conv2 = SNConv2d(dim_out, dim_out, 3, padding=1)
        self.skip = SNConv2d(dim_in, dim_out, 1, bias=False) if dim_in != dim_out else None
        self.moment_shortcut = DynamicMomentShortcut(dim_out) if with_moments else None

    def _shortcut(self, x):
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        if self.skip is not None:
            x = self.skip(x)
        return x

    def _residual(self, x, lr_target):
        cond = resize_bilinear(lr_target, x.shape[-2], x.shape[-1])
        x = self.norm1(x, cond)
        x = F.leaky_relu(x, 0.2)
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv1(x)
        cond = resize_bilinear(lr_target, x.shape[-2], x.shape[-1])
        x = self.norm2(x, cond)
        x = F.leaky_relu(x, 0.2)
        x = self.conv2(x)
        return x

    def forward(
        self, x: torch.Tensor, lr_target: torch.Tensor, moments: MomentPair | None = None
    ) -> torch.Tensor:
        out = (self._residual(x, lr_target) + self._shortcut(x)) / math.sqrt(2)
        if self.moment_shortcut is not None:
            if moments is None:
                raise ValueError("block expects a moment pair")
            out = self.moment_shortcut(out, moments)
        return out


class Generator(nn.Module):
    """G(X | y): fuse high-frequency content of X with the LR target y."""

    def __init__(self, spec: GeneratorSpec | None = None, **kwargs):
        super().__init__()
        self.spec = spec or GeneratorSpec(**kwargs)
        s = self.spec
        self.from_rgb = SNConv2d(s.img_channels, s.base_channels, 3, padding=1)
        self.encoder = nn.ModuleList(
            [PonoResBlock(s.channels_at(i), s.channels_at(i + 1)) for i in range(s.num_scales)]
        )
        inner = s.channels_at(s.num_scales)
        self.enc_bottleneck = nn.ModuleList(ResBlock(inner) for _ in range(s.bottleneck_blocks))
        self.dec_bottleneck = nn.ModuleList(
            SpadainResBlock(inner, inner, s.img_channels, upsample=False, with_moments=False)
            for _ in range(s.bottleneck_blocks)
        )
        self.decoder = nn.ModuleList(
            [
                SpadainResBlock(s.channels_at(i + 1), s.channels_at(i), s.img_channels)
                for i in reversed(range(s.num_scales))
            ]
        )
        self.to_rgb = SNConv2d(s.base_channels, s.img_channels, 1)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, list[MomentPair]]:
        """Strip style scale by scale; moments are ordered outermost first."""
        if x.shape[-1] != self.spec.hr_size or x.shape[-2] != self.spec.hr_size:
            raise ValueError(
                f"expected {self.spec.hr_size}x{self.spec.hr_size} input, "
                f"got {x.shape[-2]}x{x.shape[-1]}"
            )
        h = self.from_rgb(x)
        moments = []
        for block in self.encoder:
            h, m = block(h)
            moments.append(m)
        for block in self.enc_bottleneck:
            h = block(h)
        return h, moments

    def decode(
        self, bottleneck: torch.Tensor, moments: list[MomentPair], lr_target: torch.Tensor
    ) -> torch.Tensor:
        if len(moments) != len(self.decoder):
            raise ValueError(f"expected {len(self.decoder)} moment pairs, got {len(moments)}")
        if lr_target.shape[-1] != self.spec.lr_size or lr_target.shape[-2] != self.spec.lr_size:
            raise ValueError(
                f"expected {self.spec.lr_size}x{self.spec.lr_size} LR target, "
                f"got {lr_target.shape[-2]}x{lr_target.shape[-1]}"
            )
        h = bottleneck
        for block in self.dec_bottleneck:
            h = block(h, lr_target)
        for block, m in zip(self.decoder, reversed(moments)):
            h = block(h, lr_target, m)
        h = self.to_rgb(F.leaky_relu(instance_norm(h), 0.2))
        return torch.tanh(h)

    def forward(self, x: torch.Tensor, lr_target: torch.Tensor) -> torch.Tensor:
        bottleneck, moments = self.encode(x)
        return self.decode(bottleneck, moments, lr_target)


class Discriminator(nn.Module):
    """D(img, diff) -> one logit per sample.

    The diff map rides in as extra channels at the unique layer whose
    spatial size equals the LR resolution.
    """

    def __init__(self, spec: DiscriminatorSpec | None = None, **kwargs):
        super().__init__()
        self.spec = spec or DiscriminatorSpec(**kwargs)
        s = self.spec
        num_blocks = int(math.log2(s.hr_size)) - 2  # downsample to 4x4
        self.pre = nn.ModuleList()
        self.post = nn.ModuleList()
        dim = s.base_channels
        self.from_rgb = SNConv2d(s.img_channels, dim, 3, padding=1)
        size = s.hr_size
        injected = False
        for _ in range(num_blocks):
            dim_out = min(dim * 2, s.max_channels)
            extra = 0
            if size == s.lr_size:
                extra = s.img_channels  # diff channels join here
                injected = True
            block = PlainResBlock(dim + extra, dim_out, downsample=True)
            (self.post if injected else self.pre).append(block)
            dim = dim_out
            size //= 2
        if size == s.lr_size and not injected:
            injected = True
            dim += s.img_channels
        if not injected:
            raise ValueError(f"no internal layer has spatial size {s.lr_size}")
        self.head = nn.Sequential(
            nn.LeakyReLU(0.2),
            SNConv2d(dim, dim, 4),
            nn.LeakyReLU(0.2),
            SNConv2d(dim, 1, 1),
        )

    def forward(self, img: torch.Tensor, diff: torch.Tensor) -> torch.Tensor:
        if diff.shape[-1] != self.spec.lr_size or diff.shape[-2] != self.spec.lr_size:
            raise ValueError(
                f"diff map must be {self.spec.lr_size}x{self.spec.lr_size}, "
                f"got {diff.shape[-2]}x{diff.shape[-1]}"
            )
        h = self.from_rgb(img)
        for block in self.pre:
            h = block(h)
        h = torch.cat([h, diff], dim=1)
        for block in self.post:
            h = block(h)
        return self.head(h).flatten(1).squeeze(1)


class PlainResBlock(nn.Module):
    """Unnormalized residual block for the discriminator."""

    def __init__(self, dim_in: int, dim_out: int, downsample: bool = True):
        super().__init__()
        self.downsample = downsample
        self.conv1 = SNConv2d(dim_in, dim_in, 3, padding=1)
        self.conv2 = SNConv2d(dim_in, dim_out, 3, padding=1)
        self.skip = SNConv2d(dim_in, dim_out, 1, bias=False) if dim_in != dim_out else None

    def forward(self, x):
        s = self.skip(x) if self.skip is not None else x
        if self.downsample:
            s = F.avg_pool2d(s, 2)
        h = self.conv1(F.leaky_relu(x, 0.2))
        if self.downsample:
            h = F.avg_pool2d(h, 2)
        h = self.conv2(F.leaky_relu(h, 0.2))
        return (h + s) / math.sqrt(2)
