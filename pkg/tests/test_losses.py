"""Loss functions: matching-based multi-task term and the wing penalty."""

import math

import numpy as np
import pytest
import torch

from desmoke.config import LossConfig, ModelConfig
from desmoke.losses import (
    density_modulation,
    dice_loss,
    high_frequency_wing_loss,
    highpass,
    match_queries,
    multi_task_loss,
    total_loss,
    wing,
)

CFG = LossConfig()


def laplacian_oracle(mask):
    """Direct loop evaluation of the 4-neighbor Laplacian, reflect padding."""
    h, w = mask.shape
    padded = np.pad(mask, 1, mode="reflect")  # scipy-style reflect == torch 'reflect'
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            c = padded[y + 1, x + 1]
            out[y, x] = 4 * c - padded[y, x + 1] - padded[y + 2, x + 1] \
                - padded[y + 1, x] - padded[y + 1, x + 2]
    return out


class TestHighpass:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        m = rng.random((6, 6)).astype(np.float64)
        got = highpass(torch.from_numpy(m)).numpy()
        assert np.allclose(got, laplacian_oracle(m), atol=1e-12)

    def test_constant_mask_has_zero_highpass(self):
        m = torch.full((5, 5), 0.37)
        assert highpass(m).abs().max() < 1e-6


class TestWing:
    def test_continuity_at_knee(self):
        om, ep = CFG.wing_omega, CFG.wing_epsilon
        below = wing(torch.tensor(om - 1e-12, dtype=torch.float64), om, ep)
        above = wing(torch.tensor(om + 1e-12, dtype=torch.float64), om, ep)
        assert abs(below.item() - above.item()) < 1e-9

    def test_zero_error_gives_zero(self):
        assert wing(torch.tensor(0.0), CFG.wing_omega, CFG.wing_epsilon).item() == 0.0

    def test_monotone_increasing(self):
        xs = torch.linspace(0, 0.5, 101, dtype=torch.float64)
        ys = wing(xs, CFG.wing_omega, CFG.wing_epsilon)
        assert (ys.diff() > 0).all()


class TestDensityModulation:
    def test_phi_at_zero_is_exactly_one(self):
        assert density_modulation(torch.tensor(0.0), 2.0).item() == 1.0

    def test_phi_at_one_matches_closed_form(self):
        # frozen from 1 + 2*(e - 1) = 4.43656365691809
        val = density_modulation(torch.tensor(1.0, dtype=torch.float64), 2.0).item()
        assert val == pytest.approx(4.43656365691809, abs=1e-12)

    def test_phi_strictly_increasing(self):
        xs = torch.linspace(0, 1, 51, dtype=torch.float64)
        assert (density_modulation(xs, 2.0).diff() > 0).all()


class TestHighFrequencyWingLoss:
    def test_identical_masks_give_zero(self):
        m = torch.rand(1, 6, 6)
        assert high_frequency_wing_loss(m, m, CFG).item() == 0.0

    def test_dense_gt_penalized_more_than_sparse(self):
        # same error pattern on an all-ones vs all-zeros ground truth scales
        # by phi(1)/phi(0)
        base = torch.zeros(1, 8, 8)
        bump = base.clone()
        bump[0, 4, 4] = 0.25
        sparse = high_frequency_wing_loss(bump, base, CFG)
        # shift the identical error pattern onto a dense mask: gt all ones,
        # pred dips by the same amount
        dense_gt = torch.ones(1, 8, 8)
        dense_pred = dense_gt.clone()
        dense_pred[0, 4, 4] = 0.75
        dense = high_frequency_wing_loss(dense_pred, dense_gt, CFG)
        ratio = dense.item() / sparse.item()
        assert ratio == pytest.approx(4.43656365691809, rel=1e-4)

    def test_out_of_range_mask_rejected(self):
        good = torch.rand(1, 4, 4)
        with pytest.raises(ValueError):
            high_frequency_wing_loss(good * 2.0, good, CFG)
        with pytest.raises(ValueError):
            high_frequency_wing_loss(good, good - 1.0, CFG)

    def test_permutation_invariance(self):
        g = torch.Generator().manual_seed(1)
        pred = torch.rand(1, 6, 6, generator=g)
        gt = torch.rand(1, 6, 6, generator=g)
        base = high_frequency_wing_loss(pred, gt, CFG)
        # consistent spatial permutation of both inputs: flips preserve the
        # 4-neighbor structure (reflect padding included)
        flipped = high_frequency_wing_loss(pred.flip(-1), gt.flip(-1), CFG)
        assert flipped.item() == pytest.approx(base.item(), abs=1e-5)

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(2)
        gt = torch.rand(1, 6, 6, dtype=torch.float64) * 0.8 + 0.1
        pred0 = (gt + torch.randn(1, 6, 6, dtype=torch.float64) * 0.03).clamp(0.01, 0.99)
        pred = pred0.clone().requires_grad_()

        def fn(p):
            return high_frequency_wing_loss(p, gt, CFG)

        assert torch.autograd.gradcheck(fn, (pred,), eps=1e-7, atol=1e-4, rtol=1e-3)


def perfect_outputs(gt_diff, gt_amb, clean, n_queries=4):
    """Synthetic 'ideal' network outputs for the optimum-neighborhood test."""
    b, t, h, w = gt_diff.shape
    local = torch.zeros(b, n_queries, t, h, w)
    local[:, 0] = gt_diff
    local[:, 1] = gt_amb
    logits = torch.full((b, n_queries, 3), -20.0)
    logits[:, 0, 0] = 20.0
    logits[:, 1, 1] = 20.0
    logits[:, 2:, 2] = 20.0
    return {
        "local_masks": local.clamp(0, 1),
        "type_logits": logits,
        "weights": torch.ones(b, n_queries),
        "mask_diff": gt_diff,
        "mask_amb": gt_amb,
        "restored": clean.clone(),
    }


class TestMultiTaskLoss:
    def setup_method(self):
        g = torch.Generator().manual_seed(3)
        self.gt_diff = (torch.rand(1, 2, 8, 8, generator=g) > 0.7).float()
        self.gt_amb = (torch.rand(1, 2, 8, 8, generator=g) > 0.4).float()
        self.clean = torch.rand(1, 2, 3, 32, 32, generator=g)

    def test_perfect_predictions_near_zero(self):
        out = perfect_outputs(self.gt_diff, self.gt_amb, self.clean)
        targets = {"clean": self.clean, "mask_diff": self.gt_diff, "mask_amb": self.gt_amb}
        total, comps = multi_task_loss(out, targets, CFG)
        assert total.item() < 0.01

    def test_dice_of_identical_binary_masks_is_zero(self):
        m = (torch.rand(1, 2, 8, 8) > 0.5).float()
        assert dice_loss(m, m).item() == pytest.approx(0.0, abs=1e-6)

    def test_matching_recovers_correct_queries(self):
        out = perfect_outputs(self.gt_diff, self.gt_amb, self.clean)
        instances = [(0, self.gt_diff[0]), (1, self.gt_amb[0])]
        qi, ii = match_queries(out["type_logits"][0], out["local_masks"][0], instances, CFG)
        pairs = dict(zip(ii.tolist(), qi.tolist()))
        assert pairs[0] == 0 and pairs[1] == 1

    def test_loss_decreases_toward_clean_target(self):
        # oracle: monotone sweep of restored frames from smoky toward clean
        smoky = (self.clean * 0.4 + 0.6).clamp(0, 1)
        targets = {"clean": self.clean, "mask_diff": self.gt_diff, "mask_amb": self.gt_amb}
        losses = []
        for alpha in (0.0, 0.5, 1.0):
            out = perfect_outputs(self.gt_diff, self.gt_amb, self.clean)
            out["restored"] = smoky * (1 - alpha) + self.clean * alpha
            total, _ = multi_task_loss(out, targets, CFG)
            losses.append(total.item())
        assert losses[0] > losses[1] > losses[2]

    def test_shape_mismatch_rejected(self):
        out = perfect_outputs(self.gt_diff, self.gt_amb, self.clean)
        targets = {"clean": torch.rand(1, 2, 3, 16, 16),
                   "mask_diff": self.gt_diff, "mask_amb": self.gt_amb}
        with pytest.raises(ValueError):
            multi_task_loss(out, targets, CFG)

    def test_no_smoke_sample_trains_all_queries_to_null(self):
        zero = torch.zeros_like(self.gt_diff)
        out = perfect_outputs(zero, zero, self.clean)
        targets = {"clean": self.clean, "mask_diff": zero, "mask_amb": zero}
        total, comps = multi_task_loss(out, targets, CFG)
        # queries 0/1 still claim smoke types: the classification term
        # should push back
        assert comps["cls"].item() > 1.0


class TestTotalLoss:
    def test_zero_wing_terms_reduce_to_multi_task(self):
        l = torch.tensor(1.23)
        z = torch.tensor(0.0)
        assert total_loss(l, (z, z)).item() == pytest.approx(1.23)

    def test_additivity_with_per_type_mean(self):
        assert total_loss(torch.tensor(1.0), (torch.tensor(0.5), torch.tensor(0.5))).item() \
            == pytest.approx(1.5)

    def test_nan_component_identified(self):
        with pytest.raises(FloatingPointError, match="wing"):
            total_loss(torch.tensor(1.0), (torch.tensor(float("nan")),))
        with pytest.raises(FloatingPointError, match="multi_task"):
            total_loss(torch.tensor(float("inf")), (torch.tensor(0.0),))

    def test_total_gradient_matches_finite_differences(self):
        # end-to-end grad through total = L_mul-like L1 term + wing terms
        torch.manual_seed(4)
        gt = torch.rand(1, 6, 6, dtype=torch.float64) * 0.8 + 0.1
        pred0 = (gt + torch.randn(1, 6, 6, dtype=torch.float64) * 0.02).clamp(0.02, 0.98)

        def fn(p):
            l1 = (p - gt).abs().mean()
            return total_loss(l1, (high_frequency_wing_loss(p, gt, CFG),))

        pred = pred0.clone().requires_grad_()
        assert torch.autograd.gradcheck(fn, (pred,), eps=1e-7, atol=1e-4, rtol=1e-3)
