"""Query-based joint smoke mask / smoke type prediction.

N learned queries act as localized experts: three cascaded blocks of
masked cross-attention (over pyramid scales f1..f3, coarse to fine),
self-attention, and a feedforward network refine them; each refined query
then predicts a per-frame local mask against the finest scale f4, a type
distribution over {diffusion, ambient, no-smoke}, and a nonnegative
aggregation weight. `aggregate_masks` turns the local predictions into the
two type-specific global masks as a self-normalized weighted sum.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from .encoder import FeaturePyramid

DIFFUSION, AMBIENT, NO_SMOKE = 0, 1, 2


def sincos_embed_1d(dim, positions, device, dtype):
    """Standard sin/cos embedding of integer positions, shape (len, dim)."""
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, device=device, dtype=dtype) / half)
    angles = positions.to(dtype)[:, None] * freq[None, :]
    emb = torch.cat([angles.sin(), angles.cos()], dim=-1)
    if emb.shape[-1] < dim:
        emb = F.pad(emb, (0, dim - emb.shape[-1]))
    return emb


def sincos_embed_3d(dim, t, h, w, device, dtype):
    """Temporal + 2D spatial sin/cos embedding, shape (t*h*w, dim)."""
    d_sp = dim // 2
    ye = sincos_embed_1d(d_sp, torch.arange(h, device=device), device, dtype)
    xe = sincos_embed_1d(dim - d_sp, torch.arange(w, device=device), device, dtype)
    te = sincos_embed_1d(dim, torch.arange(t, device=device), device, dtype)
    spatial = torch.cat([
        ye[:, None, :].expand(h, w, d_sp),
        xe[None, :, :].expand(h, w, dim - d_sp),
    ], dim=-1)
    full = spatial[None] + te[:, None, None, :]
    return full.reshape(t * h * w, dim)


class MLP(nn.Module):
    def __init__(self, dim, out_dim, layers=3):
        super().__init__()
        mods = []
        for i in range(layers):
            mods.append(nn.Linear(dim, dim if i < layers - 1 else out_dim))
            if i < layers - 1:
                mods.append(nn.ReLU(inplace=True))
        self.net = nn.Sequential(*mods)

    def forward(self, x):
        return self.net(x)


class SegmentationBlock(nn.Module):
    """Masked cross-attention -> self-attention -> FFN, each with residual + LN."""

    def __init__(self, dim, heads=4):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.cross_out = nn.Linear(dim, dim)
        self.norm1 = nn.LayerNorm(dim)
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, dim * 4), nn.ReLU(inplace=True), nn.Linear(dim * 4, dim))
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, queries, tokens, attn_mask=None, return_attn=False):
        """attn_mask: (B, N, S) bool, True where attention is allowed."""
        b, n, d = queries.shape
        s = tokens.shape[1]
        q = self.q(queries).reshape(b, n, self.heads, self.head_dim)
        k = self.k(tokens).reshape(b, s, self.heads, self.head_dim)
        v = self.v(tokens).reshape(b, s, self.heads, self.head_dim)
        logits = torch.einsum("bnhd,bshd->bhns", q, k) / self.head_dim**0.5
        if attn_mask is not None:
            # a query whose mask is empty falls back to unmasked attention
            degenerate = ~attn_mask.any(dim=-1)
            allow = attn_mask | degenerate[:, :, None]
            logits = logits.masked_fill(~allow[:, None, :, :], float("-inf"))
        attn = logits.softmax(dim=-1)
        mixed = torch.einsum("bhns,bshd->bnhd", attn, v).reshape(b, n, d)
        queries = self.norm1(queries + self.cross_out(mixed))
        sa, _ = self.self_attn(queries, queries, queries, need_weights=False)
        queries = self.norm2(queries + sa)
        queries = self.norm3(queries + self.ffn(queries))
        return queries, (attn if return_attn else None)


class QuerySegmenter(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.query_dim
        self.num_queries = cfg.num_queries
        self.query_embed = nn.Embedding(cfg.num_queries, d)
        c1, c2, c3, c4 = cfg.channels
        self.scale_proj = nn.ModuleList([nn.Conv2d(c, d, 1) for c in (c1, c2, c3)])
        self.level_embed = nn.Parameter(torch.zeros(3, d))
        self.pixel_embed = nn.Conv2d(c4, d, 1)
        self.blocks = nn.ModuleList([SegmentationBlock(d) for _ in range(3)])
        self.mask_mlp = MLP(d, d)
        self.type_mlp = MLP(d, 3, layers=2)
        self.weight_cnn = nn.Sequential(
            nn.Conv2d(1, 8, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(8, 1, 3, padding=1),
        )

    def mask_logits(self, queries, pix):
        # queries (B, N, d) x per-pixel embedding (B, T, d, h, w)
        return torch.einsum("bnd,btdhw->bnthw", self.mask_mlp(queries), pix)

    def _tokens(self, f, proj, level):
        b, t, c, h, w = f.shape
        x = proj(f.reshape(b * t, c, h, w)).reshape(b, t, -1, h, w)
        tokens = x.permute(0, 1, 3, 4, 2).reshape(b, t * h * w, x.shape[2])
        pos = sincos_embed_3d(tokens.shape[-1], t, h, w, f.device, f.dtype)
        return tokens + pos[None] + self.level_embed[level][None, None], (t, h, w)

    @staticmethod
    def _attention_mask(mask_probs, shape):
        # resize current mask estimate to this scale's token grid
        t, h, w = shape
        b, n = mask_probs.shape[:2]
        m = mask_probs.reshape(b * n, *mask_probs.shape[2:])
        m = F.interpolate(m, size=(h, w), mode="bilinear", align_corners=False)
        return (m >= 0.5).reshape(b, n, t * h * w)

    def forward(self, pyr: FeaturePyramid, return_attn=False):
        f4 = pyr.f4
        b, t = f4.shape[:2]
        pix = self.pixel_embed(f4.reshape(b * t, *f4.shape[2:]))
        pix = pix.reshape(b, t, *pix.shape[1:])

        queries = self.query_embed.weight[None].expand(b, -1, -1)
        mask_probs = None
        attns = []
        for level, (block, f) in enumerate(zip(self.blocks, (pyr.f1, pyr.f2, pyr.f3))):
            tokens, shape = self._tokens(f, self.scale_proj[level], level)
            attn_mask = None if mask_probs is None else self._attention_mask(mask_probs, shape)
            queries, attn = block(queries, tokens, attn_mask, return_attn)
            mask_probs = torch.sigmoid(self.mask_logits(queries, pix))
            attns.append(attn)

        local_masks = mask_probs  # (B, N, T, h4, w4)
        type_logits = self.type_mlp(queries)
        n = local_masks.shape[1]
        flat = local_masks.reshape(b * n * t, 1, *local_masks.shape[3:])
        scores = self.weight_cnn(flat).mean(dim=(1, 2, 3)).reshape(b, n, t).mean(dim=-1)
        weights = F.softplus(scores)
        out = {
            "local_masks": local_masks,
            "type_logits": type_logits,
            "weights": weights,
            "query_states": queries,
        }
        if return_attn:
            out["cross_attns"] = attns
        return out


def aggregate_masks(local_masks, type_probs, weights):
    """Type-wise self-normalized weighted sum of local masks.

    Each query contributes to the type it argmaxes; a type with no queries
    yields a zero mask, and an all-zero weight set degrades to uniform
    weights so the result stays a convex combination.

    Args:
        local_masks: (B, N, T, h, w) in [0, 1].
        type_probs: (B, N, 3) distributions (or logits; only argmax is used).
        weights: (B, N) nonnegative.

    Returns:
        (M_diff, M_amb), each (B, T, h, w).
    """
    assign = type_probs.argmax(dim=-1)
    outs = []
    for typ in (DIFFUSION, AMBIENT):
        sel = (assign == typ).to(local_masks.dtype)
        w_eff = weights * sel
        wsum = w_eff.sum(dim=1, keepdim=True)
        uniform = sel / sel.sum(dim=1, keepdim=True).clamp(min=1.0)
        w_norm = torch.where(wsum > 0, w_eff / wsum.clamp(min=torch.finfo(local_masks.dtype).tiny), uniform)
        outs.append(torch.einsum("bn,bnthw->bthw", w_norm, local_masks))
    return outs[0], outs[1]
