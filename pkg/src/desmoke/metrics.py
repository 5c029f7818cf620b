"""Reference-based restoration quality metrics and directory evaluation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import DataError

PSNR_CAP_DB = 100.0
EVAL_SCHEMA_VERSION = "1"


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 255.0) -> tuple[float, bool]:
    """Peak signal-to-noise ratio in dB on the given range.

    Returns (value, is_infinite); identical inputs report the 100 dB cap
    with the infinite flag set so aggregates stay finite.
    """
    if a.shape != b.shape:
        raise DataError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB, True
    return float(10.0 * np.log10(data_range**2 / mse)), False


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 255.0,
         sigma: float = 1.5, k1: float = 0.01, k2: float = 0.02 + 0.01) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Channels are scored independently and averaged. Matches the standard
    Gaussian-weighted formulation (population covariance).
    """
    if a.shape != b.shape:
        raise DataError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    radius = 5  # 11x11 window
    truncate = radius / sigma
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x = a[..., ch].astype(np.float64)
        y = b[..., ch].astype(np.float64)
        mu_x = gaussian_filter(x, sigma, truncate=truncate)
        mu_y = gaussian_filter(y, sigma, truncate=truncate)
        var_x = gaussian_filter(x * x, sigma, truncate=truncate) - mu_x**2
        var_y = gaussian_filter(y * y, sigma, truncate=truncate) - mu_y**2
        cov = gaussian_filter(x * y, sigma, truncate=truncate) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        full = num / den
        # average over the window-valid interior, like the standard harness
        if min(full.shape) > 2 * radius:
            full = full[radius:-radius, radius:-radius]
        scores.append(np.mean(full))
    return float(np.mean(scores))


@dataclass
class ClipScore:
    psnr_db: float
    ssim: float
    frames: int
    psnr_infinite: bool = False


@dataclass
class EvalReport:
    schema_version: str = EVAL_SCHEMA_VERSION
    per_clip: dict[str, ClipScore] = field(default_factory=dict)
    psnr_db: float = 0.0
    ssim: float = 0.0
    manifest: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _frames_dir(clip_dir: Path) -> Path:
    # ground-truth clips keep frames under clean/; predictions are flat
    for sub in ("restored", "clean"):
        if (clip_dir / sub).is_dir():
            return clip_dir / sub
    return clip_dir


def _list_clips(root: Path) -> dict[str, Path]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        # a single flat clip of frames
        if list(root.glob("*.png")):
            return {root.name: root}
        raise DataError(f"no clips found in {root}")
    return {p.name: p for p in subdirs}


def _load_frames(folder: Path) -> np.ndarray:
    files = sorted(folder.glob("*.png"))
    if not files:
        raise DataError(f"no frames in {folder}")
    return np.stack([np.asarray(Image.open(p).convert("RGB")) for p in files])


def evaluate_dirs(pred_dir: str | Path, gt_dir: str | Path) -> EvalReport:
    """Score every clip in pred_dir against the same-named clip in gt_dir.

    Clip scores average over frames; the report aggregates by averaging the
    per-clip means.
    """
    preds = _list_clips(Path(pred_dir))
    gts = _list_clips(Path(gt_dir))
    missing = sorted(set(preds) - set(gts)) + sorted(set(gts) - set(preds))
    if missing:
        raise DataError(f"clip sets differ between pred and gt: {missing}")

    report = EvalReport(manifest={"pred": str(pred_dir), "gt": str(gt_dir)})
    mismatched = []
    for name in sorted(preds):
        p = _load_frames(_frames_dir(preds[name]))
        g = _load_frames(_frames_dir(gts[name]))
        if p.shape != g.shape:
            mismatched.append(f"{name}: {p.shape} vs {g.shape}")
            continue
        frame_psnr = []
        any_inf = False
        frame_ssim = []
        for t in range(p.shape[0]):
            v, inf = psnr(p[t], g[t])
            frame_psnr.append(v)
            any_inf = any_inf or inf
            frame_ssim.append(ssim(p[t], g[t]))
        report.per_clip[name] = ClipScore(
            psnr_db=float(np.mean(frame_psnr)),
            ssim=float(np.mean(frame_ssim)),
            frames=p.shape[0],
            psnr_infinite=any_inf,
        )
    if mismatched:
        raise DataError("frame shape mismatches: " + "; ".join(mismatched))
    if report.per_clip:
        report.psnr_db = float(np.mean([c.psnr_db for c in report.per_clip.values()]))
        report.ssim = float(np.mean([c.ssim for c in report.per_clip.values()]))
    return report
