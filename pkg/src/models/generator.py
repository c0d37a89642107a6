"""ResNet-style translation generator with optional noise injection."""
import logging
from typing import Optional

import torch
import torch.nn as nn

from src.config import LOGGER_NAME
from src.errors import ShapeError
from src.schemas import GeneratorConfig

logger = logging.getLogger(LOGGER_NAME)

DOWNSAMPLE_FACTOR = 4


def _conv_block(in_ch: int, out_ch: int, kernel: int, stride: int, padding_mode: str) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2, padding_mode=padding_mode),
        nn.InstanceNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, padding_mode: str):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode=padding_mode),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode=padding_mode),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class NoiseAdapter(nn.Module):
    """Three convolutions taking trunk + noise maps back to the trunk width."""

    def __init__(self, channels: int, n_noise: int, padding_mode: str):
        super().__init__()
        self.layers = nn.Sequential(
            _conv_block(channels + n_noise, channels, 3, 1, padding_mode),
            _conv_block(channels, channels, 3, 1, padding_mode),
            _conv_block(channels, channels, 3, 1, padding_mode),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)


class Generator(nn.Module):
    """Fully convolutional encoder / residual trunk / decoder.

    Layers exposed to PatchNCE:
        input: the scaled input image (3 channels, full resolution)
        stem: 7x7 conv, M/4 channels, full resolution
        down1: stride-2 conv, M/2 channels, 1/2 resolution
        down2: stride-2 conv, M channels, 1/4 resolution
        trunk_mid: output of the first half of the residual trunk

    Inputs and outputs are images in [0, 1], NCHW.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        cfg.check()
        self.cfg = cfg
        m = cfg.trunk_channels
        pad = cfg.padding_mode

        self.stem = _conv_block(3, m // 4, 7, 1, pad)
        self.down1 = _conv_block(m // 4, m // 2, 3, 2, pad)
        self.down2 = _conv_block(m // 2, m, 3, 2, pad)

        self.mid_index = (cfg.n_blocks + 1) // 2
        blocks = [ResidualBlock(m, pad) for _ in range(cfg.n_blocks)]
        self.trunk_head = nn.Sequential(*blocks[:self.mid_index])
        self.trunk_tail = nn.Sequential(*blocks[self.mid_index:])

        self.n_noise = cfg.noise.n_noise
        self.noise_adapter = NoiseAdapter(m, self.n_noise, pad) if self.n_noise > 0 else None

        # nearest upsampling + conv keeps the decoder covariant under 4-pixel shifts
        self.decoder = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            _conv_block(m, m // 2, 3, 1, pad),
            nn.Upsample(scale_factor=2, mode="nearest"),
            _conv_block(m // 2, m // 4, 3, 1, pad),
            nn.Conv2d(m // 4, 3, 7, padding=3, padding_mode=pad),
            nn.Tanh(),
        )

    def nce_channels(self) -> dict[str, int]:
        """Channel count of every PatchNCE layer, in config order."""
        m = self.cfg.trunk_channels
        widths = {"input": 3, "stem": m // 4, "down1": m // 2, "down2": m, "trunk_mid": m}
        return {name: widths[name] for name in self.cfg.nce_layers}

    def _check_input(self, img: torch.Tensor):
        if img.dim() != 4 or img.shape[1] != 3:
            raise ShapeError(f"Generator expects an N x 3 x H x W batch, got {tuple(img.shape)}")
        h, w = img.shape[-2:]
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise ShapeError(f"Spatial size {h}x{w} is not divisible by {DOWNSAMPLE_FACTOR}")

    def _encode(self, img: torch.Tensor) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        self._check_input(img)
        x = img * 2.0 - 1.0
        feats = {"input": x}
        x = self.stem(x)
        feats["stem"] = x
        x = self.down1(x)
        feats["down1"] = x
        x = self.down2(x)
        feats["down2"] = x
        x = self.trunk_head(x)
        feats["trunk_mid"] = x
        return x, {name: feats[name] for name in self.cfg.nce_layers}

    def encode(self, img: torch.Tensor) -> dict[str, torch.Tensor]:
        """PatchNCE feature maps of an image batch."""
        return self._encode(img)[1]

    def sample_noise(self, like: torch.Tensor, noise_seed: Optional[int]) -> torch.Tensor:
        """Standard-normal maps matching the trunk output.

        A given seed always yields the same maps regardless of device.
        """
        shape = (like.shape[0], self.n_noise, like.shape[2], like.shape[3])
        if noise_seed is None:
            return torch.randn(shape, dtype=like.dtype, device=like.device)
        generator = torch.Generator().manual_seed(int(noise_seed))
        return torch.randn(shape, dtype=like.dtype, generator=generator).to(like.device)

    def forward(
        self,
        img: torch.Tensor,
        noise_seed: Optional[int] = None
    ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        """Translate a batch.

        Args:
            img: N x 3 x H x W batch in [0, 1], H and W divisible by 4
            noise_seed: Seed of the injected noise maps (global RNG if None)

        Returns:
            (translated batch in [0, 1], PatchNCE feature maps)

        Raises:
            ShapeError: If H or W is not divisible by 4
        """
        x, feats = self._encode(img)
        x = self.trunk_tail(x)
        if self.noise_adapter is not None:
            x = self.noise_adapter(torch.cat([x, self.sample_noise(x, noise_seed)], dim=1))
        out = (self.decoder(x) + 1.0) / 2.0
        return out, feats
