"""Lightweight spatio-temporal refinement of the feature pyramid.

Smoke moves non-rigidly, so each scale gets two attention stages with a
residual connection around each: temporal attention across the frame
window at every spatial location, then deformable attention over a few
sampled points inside a local window. Query/key/value projections are
shared between the two stages to keep the module small; when the window
does not fit inside a feature map the spatial stage falls back to dense
attention over the whole map.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from .encoder import FeaturePyramid
from .ops import bilinear_sample


class ScaleAttention(nn.Module):
    def __init__(self, channels, heads=2, head_dim=32, window=7, points=4):
        super().__init__()
        self.heads = heads
        self.head_dim = head_dim
        self.window = window
        self.points = points
        dim = heads * head_dim
        # shared between the temporal and spatial stages
        self.to_q = nn.Linear(channels, dim, bias=False)
        self.to_k = nn.Linear(channels, dim, bias=False)
        self.to_v = nn.Linear(channels, dim, bias=False)
        self.temporal_out = nn.Linear(dim, channels)
        self.spatial_out = nn.Linear(dim, channels)
        self.offset_head = nn.Linear(dim, heads * points * 2)
        nn.init.zeros_(self.offset_head.weight)
        # spread initial sampling points around the query location
        init = torch.linspace(0, 2 * torch.pi, heads * points + 1)[:-1]
        self.offset_head.bias.data = torch.stack(
            [torch.cos(init), torch.sin(init)], dim=-1).reshape(-1) * 0.5

    def temporal_stage(self, x, return_attn=False):
        # x: (B, T, C, H, W); attention across T at each location
        b, t, c, h, w = x.shape
        feat = x.permute(0, 3, 4, 1, 2).reshape(b, h * w, t, c)
        q = self.to_q(feat).reshape(b, h * w, t, self.heads, self.head_dim)
        k = self.to_k(feat).reshape(b, h * w, t, self.heads, self.head_dim)
        v = self.to_v(feat).reshape(b, h * w, t, self.heads, self.head_dim)
        logits = torch.einsum("bsthd,bsuhd->bshtu", q, k) / self.head_dim**0.5
        attn = logits.softmax(dim=-1)
        mixed = torch.einsum("bshtu,bsuhd->bsthd", attn, v)
        mixed = mixed.reshape(b, h * w, t, self.heads * self.head_dim)
        out = self.temporal_out(mixed).reshape(b, h, w, t, c).permute(0, 3, 4, 1, 2)
        return x + out, (attn if return_attn else None)

    def spatial_stage(self, x, return_attn=False):
        b, t, c, h, w = x.shape
        if self.window > min(h, w):
            return self._dense_spatial(x, return_attn)

        feat = x.permute(0, 1, 3, 4, 2).reshape(b * t, h, w, c)
        q = self.to_q(feat)                      # (BT, H, W, dim)
        k = self.to_k(feat).permute(0, 3, 1, 2)  # (BT, dim, H, W)
        v = self.to_v(feat).permute(0, 3, 1, 2)

        reach = self.window // 2
        offsets = torch.tanh(self.offset_head(q)) * reach
        offsets = offsets.reshape(b * t, h, w, self.heads, self.points, 2)
        ys = torch.arange(h, device=x.device, dtype=x.dtype).view(1, h, 1)
        xs = torch.arange(w, device=x.device, dtype=x.dtype).view(1, 1, w)

        q = q.reshape(b * t, h, w, self.heads, self.head_dim)
        mixed = []
        attn_maps = []
        for hd in range(self.heads):
            k_h = k[:, hd * self.head_dim:(hd + 1) * self.head_dim]
            v_h = v[:, hd * self.head_dim:(hd + 1) * self.head_dim]
            keys, vals = [], []
            for p in range(self.points):
                sy = ys + offsets[:, :, :, hd, p, 1]
                sx = xs + offsets[:, :, :, hd, p, 0]
                keys.append(bilinear_sample(k_h, sy, sx))
                vals.append(bilinear_sample(v_h, sy, sx))
            keys = torch.stack(keys, dim=-1)  # (BT, hd_dim, H, W, P)
            vals = torch.stack(vals, dim=-1)
            logits = torch.einsum("bhwd,bdhwp->bhwp", q[:, :, :, hd], keys) / self.head_dim**0.5
            attn = logits.softmax(dim=-1)
            mixed.append(torch.einsum("bhwp,bdhwp->bhwd", attn, vals))
            if return_attn:
                attn_maps.append(attn)
        mixed = torch.cat(mixed, dim=-1)  # (BT, H, W, dim)
        out = self.spatial_out(mixed).reshape(b, t, h, w, c).permute(0, 1, 4, 2, 3)
        attn = torch.stack(attn_maps, dim=1) if return_attn else None
        return x + out, attn

    def _dense_spatial(self, x, return_attn=False):
        # window exceeds the map: attend over all H*W positions per frame
        b, t, c, h, w = x.shape
        feat = x.permute(0, 1, 3, 4, 2).reshape(b * t, h * w, c)
        q = self.to_q(feat).reshape(b * t, h * w, self.heads, self.head_dim)
        k = self.to_k(feat).reshape(b * t, h * w, self.heads, self.head_dim)
        v = self.to_v(feat).reshape(b * t, h * w, self.heads, self.head_dim)
        logits = torch.einsum("bshd,buhd->bhsu", q, k) / self.head_dim**0.5
        attn = logits.softmax(dim=-1)
        mixed = torch.einsum("bhsu,buhd->bshd", attn, v).reshape(b * t, h * w, -1)
        out = self.spatial_out(mixed).reshape(b, t, h, w, c).permute(0, 1, 4, 2, 3)
        return x + out, (attn if return_attn else None)

    def forward(self, x, return_attn=False):
        x, attn_t = self.temporal_stage(x, return_attn)
        x, attn_s = self.spatial_stage(x, return_attn)
        return x, {"temporal": attn_t, "spatial": attn_s}


class TrajectoryAttention(nn.Module):
    """Applies per-scale spatio-temporal attention to all four pyramid levels."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.stages = nn.ModuleList([
            ScaleAttention(ch, cfg.attn_heads, cfg.attn_head_dim, cfg.attn_window, cfg.attn_points)
            for ch in cfg.channels
        ])

    def forward(self, pyr: FeaturePyramid, return_attn=False):
        outs = []
        attns = []
        for stage, f in zip(self.stages, pyr.scales()):
            y, a = stage(f, return_attn)
            outs.append(y)
            attns.append(a)
        refined = FeaturePyramid(*outs)
        if return_attn:
            return refined, attns
        return refined
