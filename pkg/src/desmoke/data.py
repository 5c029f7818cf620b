"""Dataset loading and training-time sampling/augmentation."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .errors import DataError
from .synthesis.clip import SyntheticClip, read_clip_dir


class ClipDataset:
    """All clips under a dataset directory, loaded into memory (desk scale)."""

    def __init__(self, root: str | Path):
        root = Path(root)
        if not root.is_dir():
            raise DataError(f"dataset directory not found: {root}")
        dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.json").exists())
        if not dirs:
            raise DataError(f"no clip directories with meta.json under {root}")
        self.clips: list[SyntheticClip] = []
        self.names: list[str] = []
        for d in dirs:
            try:
                self.clips.append(read_clip_dir(d))
            except DataError as e:
                raise DataError(f"malformed clip {d.name}: {e}") from e
            self.names.append(d.name)

    def __len__(self):
        return len(self.clips)


def photometric_jitter(frames: torch.Tensor, params: tuple[float, float, float],
                       rng: np.random.Generator) -> torch.Tensor:
    """Brightness/contrast/saturation jitter, one draw for the whole window.

    frames: (T, 3, H, W) in [0, 1]; the same transform must be applied to
    the paired clean target, so this returns a closure-applied copy given
    pre-drawn factors via `apply_photometric`.
    """
    b_rng, c_rng, s_rng = params
    factors = (
        rng.uniform(-b_rng, b_rng),
        1.0 + rng.uniform(-c_rng, c_rng),
        1.0 + rng.uniform(-s_rng, s_rng),
    )
    return apply_photometric(frames, factors), factors


def apply_photometric(frames: torch.Tensor, factors) -> torch.Tensor:
    brightness, contrast, saturation = factors
    out = frames + brightness
    mean = out.mean(dim=(1, 2, 3), keepdim=True)
    out = (out - mean) * contrast + mean
    gray = out.mean(dim=1, keepdim=True)
    out = gray + (out - gray) * saturation
    return out.clamp(0.0, 1.0)


class WindowSampler:
    """Draws random (window, crop, jitter) training batches from a dataset."""

    def __init__(self, dataset: ClipDataset, cfg: TrainConfig, window: int,
                 mask_stride: int = 4):
        self.dataset = dataset
        self.cfg = cfg
        self.window = window
        self.mask_stride = mask_stride
        self.rng = np.random.default_rng(cfg.seed)
        for name, clip in zip(dataset.names, dataset.clips):
            h, w = clip.clean.shape[1:3]
            if h < cfg.crop_size or w < cfg.crop_size:
                raise DataError(f"clip {name} ({h}x{w}) smaller than crop {cfg.crop_size}")

    def _window_indices(self, t_len: int) -> np.ndarray:
        if t_len >= self.window:
            start = int(self.rng.integers(0, t_len - self.window + 1))
            return np.arange(start, start + self.window)
        idx = np.arange(self.window)  # short clip: replicate the last frame
        return np.clip(idx, 0, t_len - 1)

    def sample_batch(self, batch_size: int) -> dict[str, torch.Tensor]:
        smoky, clean, m_diff, m_amb = [], [], [], []
        cs = self.cfg.crop_size
        for _ in range(batch_size):
            clip = self.dataset.clips[int(self.rng.integers(0, len(self.dataset)))]
            t_len, h, w = clip.clean.shape[:3]
            ti = self._window_indices(t_len)
            y0 = int(self.rng.integers(0, h - cs + 1))
            x0 = int(self.rng.integers(0, w - cs + 1))

            def crop(arr):
                return arr[ti, y0:y0 + cs, x0:x0 + cs]

            s = torch.from_numpy(crop(clip.smoky)).permute(0, 3, 1, 2).float() / 255.0
            c = torch.from_numpy(crop(clip.clean)).permute(0, 3, 1, 2).float() / 255.0
            s, factors = photometric_jitter(s, self.cfg.photometric, self.rng)
            c = apply_photometric(c, factors)
            smoky.append(s)
            clean.append(c)
            m_diff.append(torch.from_numpy(crop(clip.diff_mask)).float() / 255.0)
            m_amb.append(torch.from_numpy(crop(clip.amb_mask)).float() / 255.0)

        def pool(masks):
            m = torch.stack(masks)
            b, t = m.shape[:2]
            m = F.avg_pool2d(m.reshape(b * t, 1, cs, cs), self.mask_stride)
            return m.reshape(b, t, cs // self.mask_stride, cs // self.mask_stride)

        return {
            "smoky": torch.stack(smoky),
            "clean": torch.stack(clean),
            "mask_diff": pool(m_diff),
            "mask_amb": pool(m_amb),
        }
