"""Full desmoking network: perception -> segmentation -> disentanglement
-> dual-branch reconstruction.

Inputs of any size are reflect-padded to a multiple of 32 and cropped back
after decoding. Branch activation is dynamic at inference: a branch whose
predicted mask density falls below the configured threshold is skipped and
contributes a zero feature (during training both branches always run so
gradients reach them).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from .disentangle import IterativeRefiner, OverlapDisentangler, select_regions
from .encoder import build_encoder
from .reconstruction import AmbientBranch, Decoder, DiffusionBranch, temporal_composite
from .segmentation import QuerySegmenter, aggregate_masks
from .trajectory import TrajectoryAttention


def pad_to_multiple(frames, multiple=32):
    """Reflect-pad (B, T, 3, H, W) on the right/bottom; returns (frames, (H, W))."""
    h, w = frames.shape[-2:]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h == 0 and pad_w == 0:
        return frames, (h, w)
    b, t = frames.shape[:2]
    x = frames.reshape(b * t, 3, h, w)
    x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    return x.reshape(b, t, 3, h + pad_h, w + pad_w), (h, w)


class DesmokeNet(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        c4 = self.cfg.channels[3]
        self.encoder = build_encoder(self.cfg)
        self.trajectory = TrajectoryAttention(self.cfg)
        self.segmenter = QuerySegmenter(self.cfg)
        self.disentangler = OverlapDisentangler(self.cfg)
        self.refiner = IterativeRefiner(self.cfg)
        self.diffusion_branch = DiffusionBranch(c4, self.cfg.mask_window)
        self.ambient_branch = AmbientBranch(c4, self.cfg.mask_window)
        self.decoder = Decoder(self.cfg)

    def reset_counters(self):
        self.diffusion_branch.calls = 0
        self.ambient_branch.calls = 0
        self.disentangler.cross_attention_calls = 0

    def forward(self, frames, dynamic=None, force_active=None):
        """Run the full pipeline on a window of frames.

        Args:
            frames: (B, T, 3, H, W) in [0, 1].
            dynamic: enable branch skipping by mask density; defaults to
                eval mode (off during training so both branches learn).
            force_active: optional (diff, amb) bool pair overriding the
                density test, for inspection.

        Returns:
            dict with restored frames, coarse/fine masks at stride-4
            resolution of the padded input, local query predictions, and
            the branch activation flags actually used.
        """
        if dynamic is None:
            dynamic = not self.training
        frames = frames.clamp(0.0, 1.0)
        padded, orig_hw = pad_to_multiple(frames)
        b, t = padded.shape[:2]

        pyr = self.encoder(padded)
        pyr = self.trajectory(pyr)
        local = self.segmenter(pyr)
        m_diff_star, m_amb_star = aggregate_masks(
            local["local_masks"], local["type_logits"], local["weights"])

        regions, feats = select_regions(m_diff_star, m_amb_star, pyr.f4,
                                        self.cfg.binarize_threshold)
        (m_diff_prime, m_amb_prime), _ = self.disentangler(
            feats, (m_diff_star, m_amb_star), regions)
        m_diff, m_amb = self.refiner((m_diff_prime, m_amb_prime), pyr.f4)

        if force_active is not None:
            diff_active, amb_active = force_active
        elif dynamic:
            thr = self.cfg.activation_threshold
            diff_active = bool(m_diff.mean() >= thr)
            amb_active = bool(m_amb.mean() >= thr)
        else:
            diff_active = amb_active = True

        c4 = pyr.f4.shape[2]
        h4, w4 = pyr.f4.shape[-2:]
        feats_flat = pyr.f4.reshape(b * t, c4, h4, w4)
        zeros = feats_flat.new_zeros(b * t, c4, h4, w4)
        if diff_active:
            stack = temporal_composite(m_diff, self.cfg.mask_window).reshape(b * t, -1, h4, w4)
            f_diff = self.diffusion_branch(feats_flat, stack)
        else:
            f_diff = zeros
        if amb_active:
            stack = temporal_composite(m_amb, self.cfg.mask_window).reshape(b * t, -1, h4, w4)
            f_amb = self.ambient_branch(feats_flat, stack)
        else:
            f_amb = zeros

        if not diff_active and not amb_active:
            restored = padded  # smoke-free input passes through untouched
        else:
            restored = self.decoder(pyr, torch.cat([f_diff, f_amb], dim=1), padded)

        h, w = orig_hw
        out = {
            "restored": restored[:, :, :, :h, :w],
            "mask_diff": m_diff,
            "mask_amb": m_amb,
            "mask_diff_coarse": m_diff_star,
            "mask_amb_coarse": m_amb_star,
            "local_masks": local["local_masks"],
            "type_logits": local["type_logits"],
            "weights": local["weights"],
            "diff_active": diff_active,
            "amb_active": amb_active,
        }
        return out

    def mask_resolution(self, h, w):
        """Stride-4 mask grid for an input of size (h, w) after padding."""
        return ((h + (-h) % 32) // 4, (w + (-w) % 32) // 4)
