"""Training loop: Adam with polynomial learning-rate decay, gradient
clipping, per-iteration component logging, and versioned checkpoints."""

from __future__ import annotations

import dataclasses
import json
import random
import time
from pathlib import Path

import numpy as np
import torch

from .config import LossConfig, ModelConfig, RunConfig, TrainConfig
from .data import ClipDataset, WindowSampler
from .errors import CheckpointError
from .losses import GT_BINARIZE_THRESHOLD, high_frequency_wing_loss, multi_task_loss, total_loss
from .model import DesmokeNet

CHECKPOINT_VERSION = 1


def poly_lr(base_lr: float, iteration: int, total: int, power: float) -> float:
    """Polynomial decay; reaches exactly 0 at iteration == total."""
    if total <= 0:
        return base_lr
    frac = min(max(iteration / total, 0.0), 1.0)
    return base_lr * (1.0 - frac) ** power


def save_checkpoint(path: str | Path, model: DesmokeNet, run_cfg: RunConfig, iteration: int):
    payload = {
        "version": CHECKPOINT_VERSION,
        "iteration": iteration,
        "model_state": model.state_dict(),
        "model_cfg": dataclasses.asdict(run_cfg.model),
        "loss_cfg": dataclasses.asdict(run_cfg.loss),
        "train_cfg": dataclasses.asdict(run_cfg.train),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path, device: str = "cpu") -> tuple[DesmokeNet, RunConfig, int]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location=device, weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')!r} != supported {CHECKPOINT_VERSION}")

    def tup(d):
        return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}

    run_cfg = RunConfig(
        model=ModelConfig(**tup(payload["model_cfg"])),
        loss=LossConfig(**tup(payload["loss_cfg"])),
        train=TrainConfig(**tup(payload["train_cfg"])),
    )
    model = DesmokeNet(run_cfg.model).to(device)
    try:
        model.load_state_dict(payload["model_state"])
    except RuntimeError as e:
        raise CheckpointError(f"checkpoint incompatible with its config: {e}") from e
    return model, run_cfg, payload["iteration"]


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def train(run_cfg: RunConfig, data_dir: str | Path, out_dir: str | Path,
          device: str = "cpu") -> dict:
    """Train a model on a clip dataset; returns a summary dict.

    Writes `metrics.jsonl` (one record per logged iteration), periodic
    `ckpt_<iter>.pt` snapshots, and `ckpt_final.pt`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tc = run_cfg.train
    seed_everything(tc.seed)

    dataset = ClipDataset(data_dir)
    sampler = WindowSampler(dataset, tc, window=run_cfg.model.mask_window)
    model = DesmokeNet(run_cfg.model).to(device)
    model.train()
    # decoupled weight decay: with clipping at 0.01 a coupled L2 term would
    # drown the actual gradient signal
    optimizer = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)

    log_path = out_dir / "metrics.jsonl"
    first_total = last_total = None
    start = time.time()
    with open(log_path, "w") as log:
        for it in range(tc.total_iters):
            lr = poly_lr(tc.lr, it, tc.total_iters, tc.poly_power)
            for group in optimizer.param_groups:
                group["lr"] = lr

            batch = {k: v.to(device) for k, v in sampler.sample_batch(tc.batch_size).items()}
            outputs = model(batch["smoky"], dynamic=False)
            # mask BCE/Dice supervise smoke coverage (binarized GT); the wing
            # term below sees the soft densities
            targets = {
                "clean": batch["clean"],
                "mask_diff": (batch["mask_diff"] > GT_BINARIZE_THRESHOLD).float(),
                "mask_amb": (batch["mask_amb"] > GT_BINARIZE_THRESHOLD).float(),
            }
            l_mul, comps = multi_task_loss(outputs, targets, run_cfg.loss)
            shwl_d = high_frequency_wing_loss(outputs["mask_diff"], batch["mask_diff"], run_cfg.loss)
            shwl_a = high_frequency_wing_loss(outputs["mask_amb"], batch["mask_amb"], run_cfg.loss)
            loss = total_loss(l_mul, (shwl_d, shwl_a))

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), tc.grad_clip)
            optimizer.step()

            record = {
                "iter": it,
                "lr": lr,
                "total": loss.item(),
                "multi_task": l_mul.item(),
                "wing_diff": shwl_d.item(),
                "wing_amb": shwl_a.item(),
                **{k: v.item() for k, v in comps.items()},
            }
            log.write(json.dumps(record) + "\n")
            if first_total is None:
                first_total = record["total"]
            last_total = record["total"]
            if it % tc.log_interval == 0 or it == tc.total_iters - 1:
                print(f"iter {it:5d}  lr {lr:.2e}  total {record['total']:.4f}  "
                      f"rec {record['rec']:.4f}", flush=True)
            if tc.checkpoint_interval and (it + 1) % tc.checkpoint_interval == 0:
                save_checkpoint(out_dir / f"ckpt_{it + 1:06d}.pt", model, run_cfg, it + 1)

    save_checkpoint(out_dir / "ckpt_final.pt", model, run_cfg, tc.total_iters)
    return {
        "iterations": tc.total_iters,
        "first_total": first_total,
        "last_total": last_total,
        "seconds": time.time() - start,
        "checkpoint": str(out_dir / "ckpt_final.pt"),
        "log": str(log_path),
    }
