"""Smoke field simulators and clip generation."""

import numpy as np
import pytest

from desmoke.config import AmbientParams, SceneConfig, SmokeSource
from desmoke.errors import ConfigError, DataError
from desmoke.synthesis import (
    generate_clip,
    make_test_pattern_clip,
    read_clip_dir,
    simulate_ambient_smoke,
    simulate_diffusion_smoke,
    write_clip_dir,
)
from desmoke.synthesis.fields import coverage_fraction


def mask_centroid(field):
    """Oracle: density-weighted centroid of a single frame."""
    ys, xs = np.mgrid[0:field.shape[0], 0:field.shape[1]]
    total = field.sum()
    assert total > 0
    return (field * ys).sum() / total, (field * xs).sum() / total


class TestDiffusionSmoke:
    def test_single_puff_is_isotropic_gaussian_blob(self):
        # velocity 0, one emission step, no turbulence: radially symmetric
        cfg = SceneConfig(clip_length=1, scenario="diffusion",
                          sources=(SmokeSource(x=48.0, y=48.0, velocity_px_per_frame=0.0),),
                          ambient_params=AmbientParams(noise_scale=0.0), seed=5)
        frame = simulate_diffusion_smoke(cfg)[0]
        assert frame.argmax() == 48 * 96 + 48
        for d in (2, 5, 9):
            vals = [frame[48, 48 + d], frame[48, 48 - d], frame[48 + d, 48], frame[48 - d, 48]]
            assert np.allclose(vals, vals[0], atol=1e-6)
        # strictly decreasing away from the source along an axis
        assert frame[48, 50] < frame[48, 49] < frame[48, 48]

    def test_centroid_advects_along_direction(self):
        cfg = SceneConfig(clip_length=10, scenario="diffusion",
                          sources=(SmokeSource(x=10.0, y=10.0, direction_deg=0.0,
                                               velocity_px_per_frame=2.0),),
                          seed=1)
        fields = simulate_diffusion_smoke(cfg)
        _, x_first = mask_centroid(fields[0])
        _, x_last = mask_centroid(fields[9])
        assert x_last > x_first

    def test_displacement_projects_onto_direction(self):
        # directionality invariant for a non-axis-aligned direction
        cfg = SceneConfig(clip_length=10, scenario="diffusion",
                          sources=(SmokeSource(x=30.0, y=30.0, direction_deg=45.0,
                                               velocity_px_per_frame=2.0),),
                          seed=2)
        fields = simulate_diffusion_smoke(cfg)
        y0, x0 = mask_centroid(fields[0])
        y1, x1 = mask_centroid(fields[-1])
        d = np.array([np.cos(np.deg2rad(45.0)), np.sin(np.deg2rad(45.0))])
        assert np.dot([x1 - x0, y1 - y0], d) > 0

    def test_deterministic_bytes(self):
        cfg = SceneConfig(scenario="diffusion", seed=42)
        a = simulate_diffusion_smoke(cfg)
        b = simulate_diffusion_smoke(cfg)
        assert a.tobytes() == b.tobytes()

    def test_coverage_stays_local(self):
        cfg = SceneConfig(scenario="diffusion", seed=3)
        fields = simulate_diffusion_smoke(cfg)
        assert (coverage_fraction(fields) <= 0.25).all()

    def test_scenario_mismatch_rejected(self):
        cfg = SceneConfig(scenario="ambient", seed=0)
        with pytest.raises(ConfigError):
            simulate_diffusion_smoke(cfg)

    def test_source_outside_bounds_rejected(self):
        with pytest.raises(ConfigError):
            SceneConfig(scenario="diffusion", sources=(SmokeSource(x=200.0, y=10.0),))

    def test_zero_length_clip_rejected(self):
        with pytest.raises(ConfigError):
            SceneConfig(clip_length=0)


class TestAmbientSmoke:
    def test_zero_base_density_gives_zero_mask(self):
        cfg = SceneConfig(scenario="ambient",
                          ambient_params=AmbientParams(base_density=0.0), seed=1)
        assert simulate_ambient_smoke(cfg).max() == 0.0

    def test_zero_drift_is_temporally_constant(self):
        # oracle: max frame-to-frame difference
        cfg = SceneConfig(scenario="ambient",
                          ambient_params=AmbientParams(base_density=0.5, drift_speed=0.0),
                          seed=7)
        fields = simulate_ambient_smoke(cfg)
        assert np.abs(np.diff(fields, axis=0)).max() < 1e-6

    def test_default_coverage_is_global(self):
        cfg = SceneConfig(scenario="ambient", seed=9)
        fields = simulate_ambient_smoke(cfg)
        assert (coverage_fraction(fields) >= 0.5).all()

    def test_values_in_range(self):
        cfg = SceneConfig(scenario="ambient", seed=11)
        fields = simulate_ambient_smoke(cfg)
        assert fields.min() >= 0.0 and fields.max() <= 1.0


class TestGenerateClip:
    def test_pure_diffusion_has_zero_ambient_mask(self):
        clip = generate_clip(SceneConfig(scenario="diffusion", seed=4))
        assert clip.amb_mask.max() == 0
        assert clip.diff_mask.max() > 0

    def test_pure_ambient_has_zero_diffusion_mask(self):
        clip = generate_clip(SceneConfig(scenario="ambient", seed=4))
        assert clip.diff_mask.max() == 0
        assert clip.amb_mask.max() > 0

    def test_entangled_masks_intersect(self, entangled_scene):
        clip = generate_clip(entangled_scene)
        inter = ((clip.diff_mask / 255.0 > 0.05) & (clip.amb_mask / 255.0 > 0.05)).sum(axis=(1, 2))
        assert inter.max() > 0

    def test_regeneration_is_byte_identical(self, entangled_scene, tmp_path):
        d1 = write_clip_dir(generate_clip(entangled_scene), tmp_path / "a")
        d2 = write_clip_dir(generate_clip(entangled_scene), tmp_path / "b")
        files1 = sorted(p.relative_to(d1) for p in d1.rglob("*") if p.is_file())
        files2 = sorted(p.relative_to(d2) for p in d2.rglob("*") if p.is_file())
        assert files1 == files2
        for rel in files1:
            assert (d1 / rel).read_bytes() == (d2 / rel).read_bytes(), rel

    def test_auto_omega_tracks_density_and_clamps(self):
        clip = generate_clip(SceneConfig(scenario="diffusion", seed=4))
        assert all(0.2 <= o <= 0.95 for o in clip.omega)
        dense = generate_clip(SceneConfig(
            scenario="ambient", ambient_params=AmbientParams(base_density=1.0), seed=4))
        assert max(dense.omega) > min(clip.omega)

    def test_fixed_omega_respected(self):
        clip = generate_clip(SceneConfig(scenario="diffusion", omega_mode="fixed",
                                         omega_value=0.7, seed=4))
        assert all(o == 0.7 for o in clip.omega)

    def test_roundtrip_through_disk(self, entangled_scene, tmp_path):
        clip = generate_clip(entangled_scene)
        write_clip_dir(clip, tmp_path / "c")
        back = read_clip_dir(tmp_path / "c")
        assert (back.clean == clip.clean).all()
        assert (back.smoky == clip.smoky).all()
        assert (back.diff_mask == clip.diff_mask).all()
        assert (back.amb_mask == clip.amb_mask).all()
        assert back.omega == pytest.approx(clip.omega)
        assert back.meta == clip.meta

    def test_wrong_clean_shape_rejected(self, entangled_scene):
        bad = np.zeros((3, 10, 10, 3), dtype=np.uint8)
        with pytest.raises(DataError):
            generate_clip(entangled_scene, clean=bad)

    def test_missing_meta_rejected(self, tmp_path):
        (tmp_path / "clip").mkdir()
        with pytest.raises(DataError):
            read_clip_dir(tmp_path / "clip")

    def test_test_pattern_is_deterministic_and_in_range(self):
        cfg = SceneConfig(scenario="diffusion", seed=12)
        a = make_test_pattern_clip(cfg)
        b = make_test_pattern_clip(cfg)
        assert (a == b).all()
        assert a.dtype == np.uint8 and a.shape == (8, 96, 96, 3)
        # frames are not flat (there is texture to restore)
        assert a[0].std() > 5.0
