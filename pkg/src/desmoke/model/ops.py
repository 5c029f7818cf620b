"""Differentiable sampling primitives used by both reconstruction branches
and the deformable window attention. Pure torch, float64-safe."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def coord_channels(batch, height, width, device, dtype):
    """Normalized (x, y) coordinate grids in [-1, 1], shape (B, 2, H, W)."""
    ys = torch.linspace(-1.0, 1.0, height, device=device, dtype=dtype)
    xs = torch.linspace(-1.0, 1.0, width, device=device, dtype=dtype)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    grid = torch.stack([gx, gy], dim=0)
    return grid.unsqueeze(0).expand(batch, -1, -1, -1)


def bilinear_sample(x, ys, xs):
    """Sample feature maps at fractional pixel coordinates with zero padding.

    Args:
        x: (B, C, H, W) features.
        ys, xs: (B, *spatial) absolute pixel coordinates.

    Returns:
        (B, C, *spatial) sampled values; locations outside the map read zero.
    """
    b, c, h, w = x.shape
    out_shape = ys.shape[1:]
    ys = ys.reshape(b, -1)
    xs = xs.reshape(b, -1)

    y0 = torch.floor(ys)
    x0 = torch.floor(xs)
    y1 = y0 + 1
    x1 = x0 + 1
    wy1 = ys - y0
    wx1 = xs - x0
    wy0 = 1.0 - wy1
    wx0 = 1.0 - wx1

    flat = x.reshape(b, c, h * w)

    def gather(yi, xi, wy, wx):
        valid = (yi >= 0) & (yi <= h - 1) & (xi >= 0) & (xi <= w - 1)
        idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).long()
        vals = flat.gather(2, idx.unsqueeze(1).expand(-1, c, -1))
        return vals * (wy * wx * valid.to(x.dtype)).unsqueeze(1)

    out = (gather(y0, x0, wy0, wx0) + gather(y0, x1, wy0, wx1)
           + gather(y1, x0, wy1, wx0) + gather(y1, x1, wy1, wx1))
    return out.reshape(b, c, *out_shape)


# 3x3 kernel tap displacements, row-major
KERNEL_TAPS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def deform_conv3x3(x, offsets, weight, bias=None):
    """3x3 deformable convolution with bilinear sampling and zero padding.

    Args:
        x: (B, C_in, H, W) input features.
        offsets: (B, 18, H, W) per-pixel tap displacements, channel layout
            (dx, dy) for each of the 9 taps in row-major kernel order.
        weight: (C_out, C_in, 3, 3) convolution weights.
        bias: optional (C_out,).

    With zero offsets this reproduces a standard 3x3 convolution with
    zero padding 1.
    """
    b, c_in, h, w = x.shape
    if offsets.shape[1] != 18:
        raise ValueError(f"offset field must have 18 channels, got {offsets.shape[1]}")
    off = offsets.reshape(b, 9, 2, h, w)
    ys = torch.arange(h, device=x.device, dtype=x.dtype)
    xs = torch.arange(w, device=x.device, dtype=x.dtype)
    base_y, base_x = torch.meshgrid(ys, xs, indexing="ij")

    taps = []
    for k, (dy, dx) in enumerate(KERNEL_TAPS):
        sy = base_y + dy + off[:, k, 1]
        sx = base_x + dx + off[:, k, 0]
        taps.append(bilinear_sample(x, sy, sx))
    stacked = torch.cat(taps, dim=1)  # (B, 9*C_in, H, W), tap-major
    w_flat = weight.permute(2, 3, 0, 1).reshape(9, weight.shape[0], c_in)
    w_flat = w_flat.transpose(0, 1).reshape(weight.shape[0], 9 * c_in, 1, 1)
    return F.conv2d(stacked, w_flat, bias)
