"""Camera post-processing applied to rendered images.

Order: white balance, exposure gamma, chromatic aberration (per-channel
subpixel shift), vignette, sensor noise. Output is clamped to [0, 1].
"""
import numpy as np

from src.schemas import CameraEffectConfig


def subpixel_shift(channel: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Translate a 2-D array by (dx, dy) pixels with bilinear sampling.

    Out-of-range samples are clamped to the nearest edge pixel.
    """
    if dx == 0 and dy == 0:
        return channel
    h, w = channel.shape
    ys = np.clip(np.arange(h, dtype=np.float64) - dy, 0, h - 1)
    xs = np.clip(np.arange(w, dtype=np.float64) - dx, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = channel[y0][:, x0] * (1 - wx) + channel[y0][:, x1] * wx
    bottom = channel[y1][:, x0] * (1 - wx) + channel[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def vignette_mask(h: int, w: int, strength: float) -> np.ndarray:
    """Radial falloff: 1 at the centre, 1 - strength at the corners."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    r2 = ((yy - cy) / max(cy, 1e-12)) ** 2 + ((xx - cx) / max(cx, 1e-12)) ** 2
    return 1.0 - strength * r2 / 2.0


def apply_camera_effects(img: np.ndarray, cfg: CameraEffectConfig, seed: int) -> np.ndarray:
    """Simulate a real camera on a clean [0,1] image.

    Args:
        img: H x W x 3 array in [0, 1]
        cfg: Effect strengths; the default config is the identity
        seed: Noise seed

    Returns:
        float32 image in [0, 1]
    """
    cfg.check()
    out = img.astype(np.float64)

    gains = np.asarray(cfg.white_balance_gain, dtype=np.float64)
    if np.any(gains != 1.0):
        out = out * gains

    if cfg.exposure_gamma != 1.0:
        out = np.power(np.clip(out, 0.0, None), cfg.exposure_gamma)

    if any(dx or dy for dx, dy in cfg.chromatic_shift_px):
        out = np.stack(
            [subpixel_shift(out[..., c], dx, dy) for c, (dx, dy) in enumerate(cfg.chromatic_shift_px)],
            axis=-1,
        )

    if cfg.vignette_strength > 0:
        out = out * vignette_mask(out.shape[0], out.shape[1], cfg.vignette_strength)[..., None]

    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, cfg.noise_sigma, size=out.shape)

    return np.clip(out, 0.0, 1.0).astype(np.float32)
