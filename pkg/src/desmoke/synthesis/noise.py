"""Seeded value noise, fBm, and curl-noise velocity fields (pure numpy)."""

from __future__ import annotations

import numpy as np

LATTICE = 64  # lattice resolution of one noise octave table


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def make_octave_tables(rng: np.random.Generator, octaves: int = 4) -> list[np.ndarray]:
    """One wrapped random lattice per octave, drawn from the given rng."""
    return [rng.random((LATTICE, LATTICE)) for _ in range(octaves)]


def sample_value_noise(table: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear value noise on a wrapped lattice with smoothstep easing."""
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    ty = _smoothstep(ys - y0)
    tx = _smoothstep(xs - x0)
    n = table.shape[0]
    y0 %= n
    x0 %= n
    y1 = (y0 + 1) % n
    x1 = (x0 + 1) % n
    v00 = table[y0, x0]
    v01 = table[y0, x1]
    v10 = table[y1, x0]
    v11 = table[y1, x1]
    top = v00 * (1 - tx) + v01 * tx
    bot = v10 * (1 - tx) + v11 * tx
    return top * (1 - ty) + bot * ty


def fbm(tables: list[np.ndarray], ys: np.ndarray, xs: np.ndarray,
        base_wavelength: float, gain: float = 0.5, lacunarity: float = 2.0) -> np.ndarray:
    """Multi-octave value noise in [0, 1]. Coordinates are in pixels."""
    acc = np.zeros_like(ys, dtype=np.float64)
    amp = 1.0
    freq = 1.0 / max(base_wavelength, 1e-6)
    total = 0.0
    for table in tables:
        acc += amp * sample_value_noise(table, ys * freq, xs * freq)
        total += amp
        amp *= gain
        freq *= lacunarity
    return acc / total


def curl_noise_velocity(rng: np.random.Generator, height: int, width: int,
                        wavelength: float, strength: float) -> tuple[np.ndarray, np.ndarray]:
    """Divergence-free velocity field (vy, vx) from the curl of an fBm potential.

    Returns per-pixel velocity components in px/frame, zero-mean by
    construction of the curl, scaled so typical magnitudes ~ strength.
    """
    tables = make_octave_tables(rng, octaves=3)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    psi = fbm(tables, ys, xs, base_wavelength=wavelength)
    dpsi_dy, dpsi_dx = np.gradient(psi)
    # curl of scalar potential: v = (d psi/dy, -d psi/dx)
    vy = dpsi_dy
    vx = -dpsi_dx
    mag = np.sqrt(vy**2 + vx**2).mean() + 1e-12
    scale = strength / mag
    return vy * scale, vx * scale
