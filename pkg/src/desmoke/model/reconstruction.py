"""Dual-branch smokeless frame reconstruction.

The diffusion branch predicts an 18-channel offset field from the temporal
composite of diffusion masks (CoordConv + squeeze-excitation channel
attention) and applies a 3x3 deformable convolution so sampling follows the
smoke trajectory. The ambient branch predicts per-pixel gates over three
parallel dilated convolutions (rates 1, 2, 3) for the global, non-uniform
case. A U-Net-style decoder fuses both with the pyramid skips and predicts
a residual correction to the input frames. Either branch can be switched
off; an inactive branch contributes an all-zero feature and its compute is
skipped (each branch keeps a call counter for inspection).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from .encoder import FeaturePyramid
from .ops import coord_channels, deform_conv3x3

DILATION_RATES = (1, 2, 3)


def temporal_composite(masks: torch.Tensor, window: int) -> torch.Tensor:
    """Stack each frame's mask with its neighbors along a new channel axis.

    Args:
        masks: (B, T, h, w) per-frame masks.
        window: odd neighborhood size; clip boundaries replicate.

    Returns:
        (B, T, window, h, w) composites; channel k holds the mask at frame
        t - window//2 + k.
    """
    if window % 2 != 1:
        raise ValueError(f"window must be odd, got {window}")
    t = masks.shape[1]
    half = window // 2
    idx = torch.arange(t, device=masks.device)[:, None] + torch.arange(-half, half + 1, device=masks.device)[None, :]
    idx = idx.clamp(0, t - 1)
    return masks[:, idx]  # (B, T, window, h, w)


class SqueezeExcite(nn.Module):
    def __init__(self, channels, reduction=2):
        super().__init__()
        hidden = max(channels // reduction, 4)
        self.fc = nn.Sequential(
            nn.Linear(channels, hidden), nn.ReLU(inplace=True),
            nn.Linear(hidden, channels), nn.Sigmoid(),
        )

    def forward(self, x):
        scale = self.fc(x.mean(dim=(2, 3)))
        return x * scale[:, :, None, None]


class DiffusionBranch(nn.Module):
    """Trajectory-aligned desmoking via offset-predicted deformable conv."""

    def __init__(self, channels, mask_window, hidden=32):
        super().__init__()
        self.coord_conv = nn.Conv2d(mask_window + 2, hidden, 3, padding=1)
        self.se = SqueezeExcite(hidden)
        self.offset_proj = nn.Conv2d(hidden, 18, 1)
        # zero offsets at init: branch starts as a plain 3x3 convolution
        nn.init.zeros_(self.offset_proj.weight)
        nn.init.zeros_(self.offset_proj.bias)
        self.weight = nn.Parameter(torch.empty(channels, channels, 3, 3))
        self.bias = nn.Parameter(torch.zeros(channels))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)
        self.calls = 0

    def predict_offsets(self, mask_stack):
        coords = coord_channels(mask_stack.shape[0], *mask_stack.shape[2:],
                                mask_stack.device, mask_stack.dtype)
        x = torch.cat([mask_stack, coords], dim=1)
        x = F.relu(self.coord_conv(x))
        return self.offset_proj(self.se(x))

    def forward(self, feats, mask_stack):
        """feats (BT, C, h, w); mask_stack (BT, window, h, w)."""
        self.calls += 1
        offsets = self.predict_offsets(mask_stack)
        return deform_conv3x3(feats, offsets, self.weight, self.bias)


class AmbientBranch(nn.Module):
    """Multi-receptive-field desmoking via gated parallel dilated convs."""

    def __init__(self, channels, mask_window, hidden=16):
        super().__init__()
        self.gate_cnn = nn.Sequential(
            nn.Conv2d(mask_window, hidden, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(hidden, len(DILATION_RATES), 3, padding=1),
        )
        self.convs = nn.ModuleList([
            nn.Conv2d(channels, channels, 3, padding=r, dilation=r)
            for r in DILATION_RATES
        ])
        self.calls = 0

    def predict_gates(self, mask_stack):
        return self.gate_cnn(mask_stack).softmax(dim=1)

    def forward(self, feats, mask_stack):
        """feats (BT, C, h, w); mask_stack (BT, window, h, w)."""
        self.calls += 1
        gates = self.predict_gates(mask_stack)
        out = 0.0
        for k, conv in enumerate(self.convs):
            out = out + gates[:, k:k + 1] * conv(feats)
        return out


def _conv_block(in_ch, out_ch):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1), nn.LeakyReLU(0.1, inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1), nn.LeakyReLU(0.1, inplace=True),
    )


class Decoder(nn.Module):
    """Progressive upsampling over the pyramid skips, residual RGB output."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c1, c2, c3, c4 = cfg.channels
        self.top = _conv_block(c1, c2)
        self.up1 = _conv_block(c2 + c2, c3)          # stride 16 -> fused with f2
        self.up2 = _conv_block(c3 + c3, c4)          # stride 8  -> fused with f3
        self.up3 = _conv_block(c4 + c4 + 2 * c4, c4)  # stride 4: f4 + both branches
        self.head = nn.Sequential(
            nn.Conv2d(c4, 16, 3, padding=1), nn.LeakyReLU(0.1, inplace=True),
            nn.Conv2d(16, 3, 3, padding=1),
        )

    def forward(self, pyr: FeaturePyramid, branch_feats, frames):
        """branch_feats: (BT, 2*c4, h4, w4); frames: (B, T, 3, H, W) in [0, 1]."""
        b, t = frames.shape[:2]

        def flat(f):
            return f.reshape(b * t, *f.shape[2:])

        x = self.top(flat(pyr.f1))
        x = F.interpolate(x, size=pyr.f2.shape[-2:], mode="bilinear", align_corners=False)
        x = self.up1(torch.cat([x, flat(pyr.f2)], dim=1))
        x = F.interpolate(x, size=pyr.f3.shape[-2:], mode="bilinear", align_corners=False)
        x = self.up2(torch.cat([x, flat(pyr.f3)], dim=1))
        x = F.interpolate(x, size=pyr.f4.shape[-2:], mode="bilinear", align_corners=False)
        x = self.up3(torch.cat([x, flat(pyr.f4), branch_feats], dim=1))
        x = F.interpolate(x, size=frames.shape[-2:], mode="bilinear", align_corners=False)
        correction = self.head(x)
        out = (flat(frames) + correction).clamp(0.0, 1.0)
        return out.reshape(b, t, 3, *frames.shape[-2:])
