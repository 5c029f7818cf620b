"""Training losses.

The multi-task term supervises query classification and local masks through
bipartite matching, the fine global masks with BCE + Dice, and the restored
frames with L1. On top of that, a wing-shaped penalty on high-pass-filtered
mask errors emphasizes mask detail, with an exponential factor that raises
the penalty where ground-truth smoke is dense:

    phi = 1 + lambda_g * (exp(M_gt) - 1)
    total = L_mul + mean_over_types(mean(phi * wing(|HP(M_pred) - HP(M_gt)|)))
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

from .config import LossConfig
from .model.segmentation import AMBIENT, DIFFUSION, NO_SMOKE

# fixed 4-neighbor Laplacian high-pass kernel
HIGHPASS_KERNEL = ((0.0, -1.0, 0.0), (-1.0, 4.0, -1.0), (0.0, -1.0, 0.0))

# density above this counts as smoke when deriving binary coverage targets
GT_BINARIZE_THRESHOLD = 0.05


def dice_loss(pred, target, eps=1e-6):
    """Soft Dice loss over the last flattened dims; 0 for identical masks."""
    p = pred.flatten(1)
    t = target.flatten(1)
    inter = (p * t).sum(dim=1)
    denom = p.sum(dim=1) + t.sum(dim=1)
    return (1.0 - (2.0 * inter + eps) / (denom + eps)).mean()


def _gt_instances(mask_diff, mask_amb):
    """Per-sample list of (class_id, mask) for the types actually present."""
    instances = []
    if mask_diff.max() > 0:
        instances.append((DIFFUSION, mask_diff))
    if mask_amb.max() > 0:
        instances.append((AMBIENT, mask_amb))
    return instances


@torch.no_grad()
def match_queries(type_logits, local_masks, instances, cfg: LossConfig):
    """Hungarian assignment of queries to ground-truth instances.

    Cost per (query, instance) = classification + mask BCE + Dice, weighted
    by the loss config. Returns (query_idx, instance_idx) index arrays.
    """
    if not instances:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    probs = type_logits.softmax(dim=-1)  # (N, 3)
    n = local_masks.shape[0]
    m = len(instances)
    pred = local_masks.flatten(1)  # (N, P)
    cost = torch.zeros(n, m, dtype=torch.float64)
    for j, (cls, gt) in enumerate(instances):
        g = gt.flatten()[None].expand(n, -1)
        bce = F.binary_cross_entropy(pred.clamp(1e-6, 1 - 1e-6), g, reduction="none").mean(dim=1)
        inter = (pred * g).sum(dim=1)
        dice = 1.0 - (2.0 * inter + 1e-6) / (pred.sum(dim=1) + g.sum(dim=1) + 1e-6)
        cost[:, j] = (cfg.lambda_cls * (-probs[:, cls]) + cfg.lambda_bce * bce
                      + cfg.lambda_dice * dice).double()
    qi, ii = linear_sum_assignment(cost.cpu().numpy())
    return qi, ii


def multi_task_loss(outputs, targets, cfg: LossConfig):
    """Matching-based segmentation + classification + reconstruction loss.

    Args:
        outputs: network output dict (local masks, type logits, fine masks,
            restored frames).
        targets: dict with "clean" (B, T, 3, H, W) and per-type ground-truth
            masks "mask_diff"/"mask_amb" (B, T, h, w) at mask resolution.
        cfg: loss weights.

    Returns:
        (total, components) where components maps term names to tensors.
    """
    local_masks = outputs["local_masks"]
    type_logits = outputs["type_logits"]
    restored = outputs["restored"]
    clean = targets["clean"]
    if restored.shape != clean.shape:
        raise ValueError(f"restored {tuple(restored.shape)} vs clean {tuple(clean.shape)}")
    gt_diff = targets["mask_diff"]
    gt_amb = targets["mask_amb"]
    if gt_diff.shape != outputs["mask_diff"].shape:
        raise ValueError(
            f"gt masks {tuple(gt_diff.shape)} vs predicted {tuple(outputs['mask_diff'].shape)}")

    b, n = local_masks.shape[:2]
    device = local_masks.device
    class_weights = torch.tensor([1.0, 1.0, cfg.no_smoke_weight], device=device,
                                 dtype=local_masks.dtype)

    cls_terms = []
    mask_bce_terms = []
    mask_dice_terms = []
    for i in range(b):
        instances = _gt_instances(gt_diff[i], gt_amb[i])
        qi, ii = match_queries(type_logits[i], local_masks[i], instances, cfg)
        labels = torch.full((n,), NO_SMOKE, dtype=torch.long, device=device)
        for q, j in zip(qi, ii):
            labels[q] = instances[j][0]
        cls_terms.append(F.cross_entropy(type_logits[i], labels, weight=class_weights))
        for q, j in zip(qi, ii):
            gt = instances[j][1]
            pred = local_masks[i, q].clamp(1e-6, 1 - 1e-6)
            mask_bce_terms.append(F.binary_cross_entropy(pred, gt))
            mask_dice_terms.append(dice_loss(pred[None], gt[None]))

    zero = local_masks.sum() * 0.0
    loss_cls = torch.stack(cls_terms).mean()
    loss_mask_bce = torch.stack(mask_bce_terms).mean() if mask_bce_terms else zero
    loss_mask_dice = torch.stack(mask_dice_terms).mean() if mask_dice_terms else zero

    fine_bce = fine_dice = zero
    for pred, gt in ((outputs["mask_diff"], gt_diff), (outputs["mask_amb"], gt_amb)):
        fine_bce = fine_bce + F.binary_cross_entropy(pred.clamp(1e-6, 1 - 1e-6), gt) / 2
        fine_dice = fine_dice + dice_loss(pred, gt) / 2

    loss_rec = (restored - clean).abs().mean()

    components = {
        "cls": loss_cls,
        "mask_bce": loss_mask_bce + fine_bce,
        "mask_dice": loss_mask_dice + fine_dice,
        "rec": loss_rec,
    }
    total = (cfg.lambda_cls * components["cls"]
             + cfg.lambda_bce * components["mask_bce"]
             + cfg.lambda_dice * components["mask_dice"]
             + cfg.lambda_rec * components["rec"])
    return total, components


def highpass(masks):
    """Fixed 3x3 Laplacian with reflect padding; masks (..., h, w)."""
    shape = masks.shape
    x = masks.reshape(-1, 1, *shape[-2:])
    kernel = torch.tensor(HIGHPASS_KERNEL, dtype=masks.dtype, device=masks.device)
    x = F.pad(x, (1, 1, 1, 1), mode="reflect")
    out = F.conv2d(x, kernel.reshape(1, 1, 3, 3))
    return out.reshape(shape)


def wing(err, omega, epsilon):
    """Wing penalty: logarithmic below the knee, linear (shifted) above."""
    c = omega - omega * math.log(1.0 + omega / epsilon)
    return torch.where(err < omega,
                       omega * torch.log1p(err / epsilon),
                       err - c)


def density_modulation(gt_masks, lambda_g):
    """Per-pixel penalty gain, 1 where empty and rising with smoke density."""
    return 1.0 + lambda_g * (torch.exp(gt_masks) - 1.0)


def high_frequency_wing_loss(pred, gt, cfg: LossConfig):
    """Density-modulated wing penalty on high-pass mask errors.

    Both masks must be normalized to [0, 1]; returns a scalar mean of
    phi(gt) * wing(|HP(pred) - HP(gt)|).
    """
    for name, m in (("pred", pred), ("gt", gt)):
        if m.min() < 0 or m.max() > 1:
            raise ValueError(f"{name} mask outside [0, 1]: range "
                             f"[{float(m.min()):.4f}, {float(m.max()):.4f}]")
    err = (highpass(pred) - highpass(gt)).abs()
    phi = density_modulation(gt, cfg.lambda_g)
    return (phi * wing(err, cfg.wing_omega, cfg.wing_epsilon)).mean()


def total_loss(l_mul, shwl_terms):
    """Combine the multi-task loss with the per-type mean of the wing terms."""
    for name, v in [("multi_task", l_mul)] + [(f"wing[{i}]", t) for i, t in enumerate(shwl_terms)]:
        if not torch.isfinite(v):
            raise FloatingPointError(f"non-finite loss component: {name} = {v}")
    shwl = torch.stack(list(shwl_terms)).mean() if len(shwl_terms) else l_mul * 0.0
    return l_mul + shwl
