"""Smoke density field simulators.

Two motion phenomenologies on a 2D grid:

* diffusion smoke — local and directional: point-source emission advected
  along a configured direction (semi-Lagrangian advection-diffusion with
  curl-noise turbulence), forming a plume hugging the source->direction ray;
* ambient smoke — global and directionless: a smooth multi-octave noise
  field with slow coherent drift covering most of the frame.

All outputs are (T, H, W) float32 densities in [0, 1], deterministic
functions of the SceneConfig (including its seed).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from ..config import SceneConfig
from ..errors import ConfigError
from .noise import curl_noise_velocity, fbm, make_octave_tables

EMIT_SIGMA = 1.5        # px, footprint of one emission puff
STEP_BLUR_SIGMA = 0.6   # px/frame, molecular diffusion stand-in
DISSIPATION = 0.995     # per-frame density retention
CURL_WAVELENGTH = 24.0  # px, turbulence feature size
CURL_STRENGTH = 0.6     # px/frame at noise_scale = 1
COVERAGE_THRESHOLD = 0.05  # normalized density counted as "covered"


def _emission_blob(height: int, width: int, x: float, y: float, rate: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    r2 = (xs - x) ** 2 + (ys - y) ** 2
    return rate * np.exp(-r2 / (2.0 * EMIT_SIGMA**2))


def _advect(field: np.ndarray, vy: np.ndarray, vx: np.ndarray) -> np.ndarray:
    # semi-Lagrangian backtrace; mass leaving the frame is lost (zero fill)
    h, w = field.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = np.stack([ys - vy, xs - vx])
    return map_coordinates(field, coords, order=1, mode="constant", cval=0.0)


def simulate_diffusion_smoke(cfg: SceneConfig) -> np.ndarray:
    """Per-frame plume density from all configured point sources."""
    if cfg.scenario not in ("diffusion", "entangled"):
        raise ConfigError(f"diffusion simulation needs a diffusion/entangled scenario, got {cfg.scenario!r}")
    if not cfg.sources:
        raise ConfigError("diffusion simulation needs at least one source")

    h, w = cfg.height, cfg.width
    noise_scale = cfg.ambient_params.noise_scale
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD1FF]))
    total = np.zeros((cfg.clip_length, h, w), dtype=np.float64)

    for src in cfg.sources:
        if noise_scale > 0:
            vy_n, vx_n = curl_noise_velocity(rng, h, w, CURL_WAVELENGTH,
                                             CURL_STRENGTH * noise_scale)
        else:
            vy_n = vx_n = np.zeros((h, w))
        theta = np.deg2rad(src.direction_deg)
        # image coordinates: +x right, +y down, angle measured from +x toward +y
        vx = src.velocity_px_per_frame * np.cos(theta) + vx_n
        vy = src.velocity_px_per_frame * np.sin(theta) + vy_n

        field = np.zeros((h, w), dtype=np.float64)
        for t in range(cfg.clip_length):
            field = _advect(field, vy, vx) * DISSIPATION
            if t >= src.start_frame:
                field += _emission_blob(h, w, src.x, src.y, src.emission_rate)
            field = gaussian_filter(field, STEP_BLUR_SIGMA, mode="constant")
            total[t] += field

    return np.clip(total, 0.0, 1.0).astype(np.float32)


def simulate_ambient_smoke(cfg: SceneConfig) -> np.ndarray:
    """Per-frame global density: drifting fBm field scaled by base_density."""
    if cfg.scenario not in ("ambient", "entangled"):
        raise ConfigError(f"ambient simulation needs an ambient/entangled scenario, got {cfg.scenario!r}")

    h, w = cfg.height, cfg.width
    p = cfg.ambient_params
    out = np.zeros((cfg.clip_length, h, w), dtype=np.float32)
    if p.base_density <= 0.0:
        return out

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA3B1]))
    tables = make_octave_tables(rng, octaves=4)
    drift_angle = rng.uniform(0.0, 2.0 * np.pi)
    ux, uy = np.cos(drift_angle), np.sin(drift_angle)
    wavelength = max(min(h, w) / 3.0, 4.0) * max(p.noise_scale, 1e-3)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    for t in range(cfg.clip_length):
        n = fbm(tables, ys + p.drift_speed * t * uy, xs + p.drift_speed * t * ux, wavelength)
        # keep a floor well above the coverage threshold so the field stays global
        out[t] = p.base_density * (0.55 + 0.45 * n)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def coverage_fraction(density: np.ndarray, threshold: float = COVERAGE_THRESHOLD) -> np.ndarray:
    """Fraction of covered pixels per frame for a (T, H, W) density stack."""
    t = density.reshape(density.shape[0], -1)
    return (t > threshold).mean(axis=1)
