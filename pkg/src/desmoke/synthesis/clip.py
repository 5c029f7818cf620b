"""Paired clean/smoky clip generation and on-disk clip layout.

A generated clip directory looks like:

    clip_0000/
      clean/0000.png ...    8-bit RGB
      smoky/0000.png ...    8-bit RGB
      mask_diff/0000.png    8-bit grayscale density
      mask_amb/0000.png     8-bit grayscale density
      meta.json             scene config echo + per-frame omega, schema-versioned

Everything is a pure function of the SceneConfig, so the same config
regenerates byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..config import SceneConfig
from ..errors import DataError
from .compositing import composite_frame
from .fields import simulate_ambient_smoke, simulate_diffusion_smoke
from .noise import fbm, make_octave_tables

CLIP_SCHEMA_VERSION = "1"
OMEGA_CLAMP = (0.2, 0.95)


@dataclass
class SyntheticClip:
    clean: np.ndarray      # (T, H, W, 3) uint8
    smoky: np.ndarray      # (T, H, W, 3) uint8
    diff_mask: np.ndarray  # (T, H, W) uint8
    amb_mask: np.ndarray   # (T, H, W) uint8
    omega: list[float]     # per-frame transparency actually used
    meta: SceneConfig

    def __post_init__(self):
        shapes = {self.clean.shape[:3], self.smoky.shape[:3], self.diff_mask.shape, self.amb_mask.shape}
        if len(shapes) != 1:
            raise DataError(f"clip part shapes disagree: {shapes}")


def make_test_pattern_clip(cfg: SceneConfig) -> np.ndarray:
    """Procedural tissue-like clean clip: warm low-frequency texture with
    darker vessel-ish structures and a slow deterministic pan."""
    h, w, t_len = cfg.height, cfg.width, cfg.clip_length
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC1EA]))
    tables = make_octave_tables(rng, octaves=4)
    vessel_tables = make_octave_tables(rng, octaves=3)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    wavelength = max(min(h, w) / 4.0, 4.0)

    frames = np.empty((t_len, h, w, 3), dtype=np.uint8)
    for t in range(t_len):
        # 0.5 px/frame pan gives mild temporal variety without wrap seams
        sy, sx = ys + 0.5 * t, xs + 0.5 * t
        base = fbm(tables, sy, sx, wavelength)
        vessels = fbm(vessel_tables, sy, sx, wavelength / 2.0)
        vessel_dark = np.clip((vessels - 0.55) * 4.0, 0.0, 1.0)
        r = 150 + 80 * base - 70 * vessel_dark
        g = 60 + 60 * base - 35 * vessel_dark
        b = 60 + 50 * base - 30 * vessel_dark
        frames[t] = np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8)
    return frames


def _quantize_mask(density: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(density * 255.0), 0, 255).astype(np.uint8)


def generate_clip(cfg: SceneConfig, clean: np.ndarray | None = None) -> SyntheticClip:
    """Run the scenario's simulators and composite a full paired clip.

    Args:
        cfg: scene description; also seeds the procedural clean clip when
            no real frames are supplied.
        clean: optional (T, H, W, 3) uint8 clean frames matching cfg dims.
    """
    if clean is None:
        clean = make_test_pattern_clip(cfg)
    expected = (cfg.clip_length, cfg.height, cfg.width, 3)
    if clean.shape != expected:
        raise DataError(f"clean clip shape {clean.shape} does not match config {expected}")

    t_len, h, w = cfg.clip_length, cfg.height, cfg.width
    diff = np.zeros((t_len, h, w), dtype=np.float32)
    amb = np.zeros((t_len, h, w), dtype=np.float32)
    if cfg.scenario in ("diffusion", "entangled"):
        diff = simulate_diffusion_smoke(cfg)
    if cfg.scenario in ("ambient", "entangled"):
        amb = simulate_ambient_smoke(cfg)

    diff_q = _quantize_mask(diff)
    amb_q = _quantize_mask(amb)
    total_q = np.minimum(diff_q.astype(np.uint16) + amb_q.astype(np.uint16), 255).astype(np.uint8)

    blur_dir = cfg.sources[0].direction_deg if cfg.sources else 0.0
    smoky = np.empty_like(clean)
    omegas: list[float] = []
    for t in range(t_len):
        if cfg.omega_mode == "fixed":
            omega = float(cfg.omega_value)
        else:
            omega = float(np.clip(total_q[t].mean() / 255.0, *OMEGA_CLAMP))
        smoky[t] = composite_frame(clean[t], total_q[t], omega, cfg.aug, blur_dir)
        omegas.append(omega)

    return SyntheticClip(clean=clean.copy(), smoky=smoky, diff_mask=diff_q,
                         amb_mask=amb_q, omega=omegas, meta=cfg)


def _save_png(path: Path, array: np.ndarray) -> None:
    Image.fromarray(array).save(path, format="PNG")


def write_clip_dir(clip: SyntheticClip, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    for sub in ("clean", "smoky", "mask_diff", "mask_amb"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    for t in range(clip.clean.shape[0]):
        name = f"{t:04d}.png"
        _save_png(out_dir / "clean" / name, clip.clean[t])
        _save_png(out_dir / "smoky" / name, clip.smoky[t])
        _save_png(out_dir / "mask_diff" / name, clip.diff_mask[t])
        _save_png(out_dir / "mask_amb" / name, clip.amb_mask[t])
    meta = {
        "schema_version": CLIP_SCHEMA_VERSION,
        "scene": clip.meta.to_dict(),
        "omega": clip.omega,
    }
    with open(out_dir / "meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir


def _load_frames(folder: Path) -> np.ndarray:
    files = sorted(folder.glob("*.png"))
    if not files:
        raise DataError(f"no frames found in {folder}")
    return np.stack([np.asarray(Image.open(p)) for p in files])


def read_clip_dir(clip_dir: str | Path) -> SyntheticClip:
    clip_dir = Path(clip_dir)
    meta_path = clip_dir / "meta.json"
    if not meta_path.exists():
        raise DataError(f"missing meta.json in {clip_dir}")
    with open(meta_path) as f:
        meta = json.load(f)
    if meta.get("schema_version") != CLIP_SCHEMA_VERSION:
        raise DataError(f"unsupported clip schema {meta.get('schema_version')!r} in {clip_dir}")
    try:
        clean = _load_frames(clip_dir / "clean")
        smoky = _load_frames(clip_dir / "smoky")
        diff = _load_frames(clip_dir / "mask_diff")
        amb = _load_frames(clip_dir / "mask_amb")
    except FileNotFoundError as e:
        raise DataError(f"incomplete clip {clip_dir}: {e}") from e
    if not (len(clean) == len(smoky) == len(diff) == len(amb)):
        raise DataError(f"frame counts disagree in {clip_dir}")
    return SyntheticClip(clean=clean, smoky=smoky, diff_mask=diff, amb_mask=amb,
                         omega=[float(o) for o in meta["omega"]],
                         meta=SceneConfig.from_dict(meta["scene"]))
