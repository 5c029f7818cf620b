"""Inference: sliding-window desmoking of a clip directory.

Each frame is restored from a window centered on it (replicated at clip
edges). Outputs per clip: restored/NNNN.png, mask_diff/NNNN.png,
mask_amb/NNNN.png (predicted densities upsampled to frame size), and
record.json with per-frame branch activation flags and timings.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import DataError
from .train import load_checkpoint

RECORD_SCHEMA_VERSION = "1"


def _load_input_frames(clip_dir: Path) -> np.ndarray:
    if (clip_dir / "smoky").is_dir():
        folder = clip_dir / "smoky"
    else:
        folder = clip_dir
    files = sorted(folder.glob("*.png"))
    if not files:
        raise DataError(f"no input frames in {clip_dir}")
    return np.stack([np.asarray(Image.open(p).convert("RGB")) for p in files])


def infer_clip(ckpt_path: str | Path, clip_dir: str | Path, out_dir: str | Path,
               device: str = "cpu") -> dict:
    model, run_cfg, _ = load_checkpoint(ckpt_path, device=device)
    model.eval()
    window = run_cfg.model.mask_window
    half = window // 2

    clip_dir = Path(clip_dir)
    frames = _load_input_frames(clip_dir)
    t_len, h, w = frames.shape[:3]
    x = torch.from_numpy(frames).permute(0, 3, 1, 2).float().to(device) / 255.0

    out_dir = Path(out_dir)
    for sub in ("restored", "mask_diff", "mask_amb"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    record = {"schema_version": RECORD_SCHEMA_VERSION, "frames": t_len,
              "window": window, "activation": [], "timings_s": []}
    with torch.no_grad():
        for t in range(t_len):
            idx = np.clip(np.arange(t - half, t + half + 1), 0, t_len - 1)
            t0 = time.time()
            out = model(x[idx][None], dynamic=True)
            record["timings_s"].append(time.time() - t0)
            record["activation"].append(
                {"frame": t, "diffusion": out["diff_active"], "ambient": out["amb_active"]})

            center = half
            restored = out["restored"][0, center].clamp(0, 1)
            restored = (restored.permute(1, 2, 0).cpu().numpy() * 255.0).round().astype(np.uint8)
            name = f"{t:04d}.png"
            Image.fromarray(restored).save(out_dir / "restored" / name)
            for key, sub in (("mask_diff", "mask_diff"), ("mask_amb", "mask_amb")):
                m = out[key][0, center][None, None]
                m = F.interpolate(m, size=(h, w), mode="bilinear", align_corners=False)[0, 0]
                m8 = (m.clamp(0, 1).cpu().numpy() * 255.0).round().astype(np.uint8)
                Image.fromarray(m8).save(out_dir / sub / name)

    with open(out_dir / "record.json", "w") as f:
        json.dump(record, f, indent=2)
        f.write("\n")
    return record
