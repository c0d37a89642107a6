"""PatchGAN discriminator."""
import torch
import torch.nn as nn

from src.errors import ShapeError
from src.schemas import DiscriminatorConfig

MIN_INPUT_SIZE = 16
KERNEL = 4
# (stride, padding) of the four convolutions
LAYOUT = ((2, 1), (2, 1), (1, 1), (1, 1))


class Discriminator(nn.Module):
    """Maps an image batch to a spatial map of real/fake logits.

    Stack: conv s2 + LeakyReLU, conv s2 + IN + LeakyReLU, conv s1 + IN +
    LeakyReLU, conv s1 to one channel. Inputs are images in [0, 1].
    """

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        cfg.check()
        c = cfg.channels
        self.layers = nn.Sequential(
            nn.Conv2d(3, c, KERNEL, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, c * 2, KERNEL, stride=2, padding=1),
            nn.InstanceNorm2d(c * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 2, c * 4, KERNEL, stride=1, padding=1),
            nn.InstanceNorm2d(c * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 4, 1, KERNEL, stride=1, padding=1),
        )

    @staticmethod
    def output_size(size: int) -> int:
        """Side length of the logit map for a square input of side ``size``."""
        for stride, padding in LAYOUT:
            size = (size + 2 * padding - KERNEL) // stride + 1
        return size

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        h, w = img.shape[-2:]
        if h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
            raise ShapeError(f"Discriminator input must be at least {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}, got {h}x{w}")
        return self.layers(img * 2.0 - 1.0)
