"""Pixel-wise soft compositing of a smoke density mask onto a clean frame.

The smoky frame is the clean frame pushed toward white atmospheric light in
proportion to the local smoke density and a per-frame transparency factor,
with an optional directional motion blur on the smoke layer:

    smoky = clamp( clean + omega * Aug((L - clean) * mask / 255) ),  L = 255
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve

from ..config import AugParams

ATMOSPHERIC_LIGHT = 255.0


def directional_box_blur(layer: np.ndarray, length_px: int, direction_deg: float) -> np.ndarray:
    """Box blur along a line of the given pixel length and direction.

    Length <= 1 is the identity. The kernel is a rasterized centered segment,
    normalized to preserve mean intensity.
    """
    if length_px <= 1:
        return layer
    r = length_px // 2
    size = 2 * r + 1
    kernel = np.zeros((size, size), dtype=np.float64)
    theta = np.deg2rad(direction_deg)
    ts = np.linspace(-r, r, 4 * size)
    ky = np.clip(np.round(r + ts * np.sin(theta)).astype(int), 0, size - 1)
    kx = np.clip(np.round(r + ts * np.cos(theta)).astype(int), 0, size - 1)
    np.add.at(kernel, (ky, kx), 1.0)
    kernel /= kernel.sum()
    if layer.ndim == 3:
        out = np.empty_like(layer)
        for c in range(layer.shape[2]):
            out[:, :, c] = convolve(layer[:, :, c], kernel, mode="nearest")
        return out
    return convolve(layer, kernel, mode="nearest")


def composite_frame(clean: np.ndarray, mask: np.ndarray, omega: float,
                    aug: AugParams = AugParams(), blur_direction_deg: float = 0.0) -> np.ndarray:
    """Blend an 8-bit density mask into an 8-bit RGB frame.

    Args:
        clean: (H, W, 3) uint8 clean frame.
        mask: (H, W) uint8 smoke density in 0..255.
        omega: transparency factor in [0, 1].
        aug: motion blur settings applied to the smoke layer only.
        blur_direction_deg: blur orientation (dominant smoke velocity).

    Returns:
        (H, W, 3) uint8 smoky frame.
    """
    if clean.ndim != 3 or clean.shape[2] != 3:
        raise ValueError(f"clean frame must be (H, W, 3), got {clean.shape}")
    if mask.shape != clean.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match frame {clean.shape[:2]}")
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must be in [0, 1], got {omega}")

    clean_f = clean.astype(np.float64)
    m = mask.astype(np.float64) / 255.0
    layer = (ATMOSPHERIC_LIGHT - clean_f) * m[:, :, None]
    if aug.motion_blur_enabled:
        layer = directional_box_blur(layer, aug.blur_length_px, blur_direction_deg)
    smoky = clean_f + omega * layer
    return np.clip(np.rint(smoky), 0, 255).astype(np.uint8)


def invert_composite(smoky: np.ndarray, mask: np.ndarray, omega: float) -> np.ndarray:
    """Recover the clean frame from an aug-free composite (quantization-limited).

    Valid where omega * mask / 255 < 1 and no clamping occurred.
    """
    m = omega * mask.astype(np.float64) / 255.0
    denom = 1.0 - m[:, :, None]
    clean = (smoky.astype(np.float64) - ATMOSPHERIC_LIGHT * m[:, :, None]) / denom
    return np.clip(np.rint(clean), 0, 255).astype(np.uint8)
