"""Coarse-to-fine separation of overlapping smoke masks.

Where the two coarse global masks overlap after binarization, the region
features are split by cross attention between each type's non-entangled
region (queries/keys) and the shared entangled region (values): patches of
f4 are embedded, attended, run through a feedforward network, and folded
back into a mask over the entangled pixels; non-entangled pixels keep their
coarse values through the residual term. An iterative self-attention
refiner then polishes both masks, with zero-initialized delta heads so it
starts as the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig

LOGIT_EPS = 1e-7


@dataclass
class RegionMasks:
    """Mutually exclusive binary maps: diffusion-only, ambient-only, overlap."""

    b_diff: torch.Tensor
    b_amb: torch.Tensor
    b_ent: torch.Tensor


@dataclass
class RegionFeatures:
    r_diff: torch.Tensor
    r_amb: torch.Tensor
    r_ent: torch.Tensor


def select_regions(m_diff_star, m_amb_star, f4, threshold=0.5):
    """Binarize the coarse masks and carve f4 into three disjoint regions.

    Args:
        m_diff_star, m_amb_star: (B, T, h, w) coarse masks in [0, 1].
        f4: (B, T, C, h, w) finest-scale features.
        threshold: binarization level.

    Returns:
        (RegionMasks, RegionFeatures); region masks partition the union of
        the two binarized inputs, features are zero outside their region.
    """
    bd = (m_diff_star >= threshold).to(f4.dtype)
    ba = (m_amb_star >= threshold).to(f4.dtype)
    b_ent = bd * ba
    b_diff = bd * (1.0 - ba)
    b_amb = ba * (1.0 - bd)
    masks = RegionMasks(b_diff=b_diff, b_amb=b_amb, b_ent=b_ent)
    feats = RegionFeatures(
        r_diff=f4 * b_diff.unsqueeze(2),
        r_amb=f4 * b_amb.unsqueeze(2),
        r_ent=f4 * b_ent.unsqueeze(2),
    )
    return masks, feats


class OverlapDisentangler(nn.Module):
    """Cross attention from per-type regions into the shared overlap region."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c4 = cfg.channels[3]
        d = cfg.patch_dim
        self.patch = cfg.patch_size
        self.dim = d
        self.patch_embed = nn.Conv2d(c4, d, cfg.patch_size, stride=cfg.patch_size)
        self.to_q = nn.Linear(d, d)
        self.to_k = nn.Linear(d, d)
        self.to_v = nn.Linear(d, d)
        self.ffn = nn.Sequential(nn.Linear(d, d * 2), nn.GELU(), nn.Linear(d * 2, d))
        self.unpatch = nn.Linear(d, cfg.patch_size * cfg.patch_size)
        self.cross_attention_calls = 0  # inspection counter for the bypass rule

    def _embed(self, r):
        b, t, c, h, w = r.shape
        pad_h = (-h) % self.patch
        pad_w = (-w) % self.patch
        x = r.reshape(b * t, c, h, w)
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h))
        tok = self.patch_embed(x)  # (BT, d, hp, wp)
        hp, wp = tok.shape[-2:]
        return tok.flatten(2).transpose(1, 2), (hp, wp, h, w)

    def _fold(self, tokens, geom):
        hp, wp, h, w = geom
        logits = self.unpatch(tokens)  # (BT, P, patch*patch)
        x = logits.transpose(1, 2).reshape(tokens.shape[0], self.patch * self.patch, hp * wp)
        x = F.fold(x, output_size=(hp * self.patch, wp * self.patch),
                   kernel_size=self.patch, stride=self.patch)
        return x[:, 0, :h, :w]

    def forward(self, regions: RegionFeatures, m_star_pair, region_masks: RegionMasks,
                return_attn=False):
        """Returns the pair of coarse disentangled masks (and attention maps)."""
        m_diff_star, m_amb_star = m_star_pair
        b, t = m_diff_star.shape[:2]
        residual_diff = m_diff_star * region_masks.b_diff
        residual_amb = m_amb_star * region_masks.b_amb

        if region_masks.b_ent.sum() == 0:
            # nothing entangled: the cross attention has no value tokens to read
            return (residual_diff, residual_amb), (None, None)

        self.cross_attention_calls += 1
        v_tok, geom = self._embed(regions.r_ent)
        v = self.to_v(v_tok)

        outs = []
        attns = []
        for r in (regions.r_diff, regions.r_amb):
            tok, _ = self._embed(r)
            q = self.to_q(tok)
            k = self.to_k(tok)
            attn = (q @ k.transpose(1, 2) / self.dim**0.5).softmax(dim=-1)
            z = self.ffn(attn @ v)
            mask = torch.sigmoid(self._fold(z, geom)).reshape(b, t, *m_diff_star.shape[2:])
            outs.append(mask * region_masks.b_ent)
            attns.append(attn if return_attn else None)

        m_diff_prime = outs[0] + residual_diff
        m_amb_prime = outs[1] + residual_amb
        return (m_diff_prime, m_amb_prime), tuple(attns)


class IterativeRefiner(nn.Module):
    """Self-attention refinement of the disentangled masks on f4 features.

    The per-type delta heads are zero-initialized, so at initialization the
    module reproduces its input masks (up to logit clamping at the range
    boundaries).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c4 = cfg.channels[3]
        d = cfg.patch_dim
        self.iters = cfg.refine_iters
        self.in_proj = nn.Conv2d(c4 + 2, d, 1)
        self.attn = nn.MultiheadAttention(d, num_heads=4, batch_first=True)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, d * 2), nn.ReLU(inplace=True), nn.Linear(d * 2, d))
        self.delta_head = nn.Linear(d, 2)
        nn.init.zeros_(self.delta_head.weight)
        nn.init.zeros_(self.delta_head.bias)

    def forward(self, m_prime_pair, f4):
        m_diff, m_amb = m_prime_pair
        b, t, c, h, w = f4.shape
        x = torch.cat([f4, m_diff.unsqueeze(2), m_amb.unsqueeze(2)], dim=2)
        x = self.in_proj(x.reshape(b * t, c + 2, h, w))
        tokens = x.flatten(2).transpose(1, 2)
        for _ in range(self.iters):
            y = self.norm1(tokens)
            sa, _ = self.attn(y, y, y, need_weights=False)
            tokens = tokens + sa
            tokens = tokens + self.ffn(self.norm2(tokens))
        delta = self.delta_head(tokens).transpose(1, 2).reshape(b, t, 2, h, w)

        def refined(m, d):
            logits = torch.logit(m.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS))
            return torch.sigmoid(logits + d)

        return refined(m_diff, delta[:, :, 0]), refined(m_amb, delta[:, :, 1])
