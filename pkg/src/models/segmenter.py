"""Compact U-Net used as the downstream segmentation network."""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.errors import ConfigurationError, ShapeError
from src.schemas import SegmenterConfig

DOWNSAMPLE_FACTOR = 8


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(4, channels), channels)


class DoubleConv(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            _norm(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            _norm(out_ch),
            nn.ReLU(inplace=True),
        )


class Down(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(nn.MaxPool2d(2), DoubleConv(in_ch, out_ch))


class Up(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.conv = DoubleConv(in_ch + skip_ch, out_ch)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        return self.conv(torch.cat([x, skip], dim=1))


class Segmenter(nn.Module):
    """Encoder-decoder with three downsampling stages and skip connections.

    Named layers, usable for feature analysis:
        stem (w, 1), enc1 (2w, 1/2), enc2 (4w, 1/4), enc3 (8w, 1/8),
        dec2 (4w, 1/4), dec1 (2w, 1/2), dec0 (w, 1), logits (C, 1)

    Inputs of any size are padded to a multiple of 8 and every returned
    map is cropped to the input's extent at its scale (rounded up).
    """

    LAYER_IDS = ("stem", "enc1", "enc2", "enc3", "dec2", "dec1", "dec0", "logits")
    LAYER_SCALES = {"stem": 1, "enc1": 2, "enc2": 4, "enc3": 8, "dec2": 4, "dec1": 2, "dec0": 1, "logits": 1}

    def __init__(self, num_classes: int, cfg: SegmenterConfig):
        super().__init__()
        w = cfg.width
        self.num_classes = num_classes
        self.stem = DoubleConv(3, w)
        self.enc1 = Down(w, 2 * w)
        self.enc2 = Down(2 * w, 4 * w)
        self.enc3 = Down(4 * w, 8 * w)
        self.dec2 = Up(8 * w, 4 * w, 4 * w)
        self.dec1 = Up(4 * w, 2 * w, 2 * w)
        self.dec0 = Up(2 * w, w, w)
        self.head = nn.Conv2d(w, num_classes, 1)

    def layer_channels(self, layer_id: str) -> int:
        if layer_id not in self.LAYER_IDS:
            raise ConfigurationError(f"Unknown segmenter layer '{layer_id}'; known: {self.LAYER_IDS}")
        w = self.stem[0].out_channels
        return {"stem": w, "enc1": 2 * w, "enc2": 4 * w, "enc3": 8 * w,
                "dec2": 4 * w, "dec1": 2 * w, "dec0": w, "logits": self.num_classes}[layer_id]

    def _run(self, img: torch.Tensor, stop_at: str = "logits") -> dict[str, torch.Tensor]:
        if img.dim() != 4 or img.shape[1] != 3:
            raise ShapeError(f"Segmenter expects N x 3 x H x W input, got {tuple(img.shape)}")
        h, w = img.shape[-2:]
        # edge-replicate up to the next multiple of the downsampling factor
        x = F.pad(img * 2.0 - 1.0, (0, -w % DOWNSAMPLE_FACTOR, 0, -h % DOWNSAMPLE_FACTOR), mode="replicate")
        out = {}
        steps = (
            ("stem", lambda: self.stem(x)),
            ("enc1", lambda: self.enc1(out["stem"])),
            ("enc2", lambda: self.enc2(out["enc1"])),
            ("enc3", lambda: self.enc3(out["enc2"])),
            ("dec2", lambda: self.dec2(out["enc3"], out["enc2"])),
            ("dec1", lambda: self.dec1(out["dec2"], out["enc1"])),
            ("dec0", lambda: self.dec0(out["dec1"], out["stem"])),
            ("logits", lambda: self.head(out["dec0"])),
        )
        for name, step in steps:
            out[name] = step()
            if name == stop_at:
                break
        return {name: self._crop(fmap, name, h, w) for name, fmap in out.items()}

    def _crop(self, fmap: torch.Tensor, layer_id: str, h: int, w: int) -> torch.Tensor:
        """Drop the rows and columns that only cover padding."""
        scale = self.LAYER_SCALES[layer_id]
        return fmap[..., :math.ceil(h / scale), :math.ceil(w / scale)]

    def features(self, img: torch.Tensor, layer_id: str) -> torch.Tensor:
        """Feature map of one named layer.

        Raises:
            ConfigurationError: Unknown layer id
        """
        if layer_id not in self.LAYER_IDS:
            raise ConfigurationError(f"Unknown segmenter layer '{layer_id}'; known: {self.LAYER_IDS}")
        return self._run(img, stop_at=layer_id)[layer_id]

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        return self._run(img)["logits"]
