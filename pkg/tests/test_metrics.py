"""PSNR/SSIM correctness and the directory evaluation harness."""

import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity as skimage_ssim

from desmoke.errors import DataError
from desmoke.metrics import evaluate_dirs, psnr, ssim


@pytest.fixture
def image():
    rng = np.random.default_rng(0)
    base = rng.integers(30, 220, size=(48, 48, 3))
    return base.astype(np.uint8)


class TestPsnr:
    def test_constant_offset_matches_closed_form(self, image):
        # closed form: every pixel differs by 16 levels -> 20*log10(255/16)
        shifted = np.clip(image.astype(int) + 16, 0, 255).astype(np.uint8)
        assert shifted.min() >= 16  # no clipping happened
        value, inf = psnr(image, shifted)
        assert not inf
        assert value == pytest.approx(20.0 * math.log10(255.0 / 16.0), abs=1e-9)

    def test_identical_images_capped_and_flagged(self, image):
        value, inf = psnr(image, image.copy())
        assert inf and value == 100.0

    def test_strictly_decreasing_with_noise_amplitude(self, image):
        rng = np.random.default_rng(1)
        noise = rng.standard_normal(image.shape)
        values = []
        for amp in (2.0, 8.0, 32.0):
            noisy = np.clip(image + amp * noise, 0, 255).astype(np.uint8)
            values.append(psnr(image, noisy)[0])
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch_rejected(self, image):
        with pytest.raises(DataError):
            psnr(image, image[:10])


class TestSsim:
    def test_identical_images_score_one(self, image):
        assert ssim(image, image.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_image_scores_low(self):
        # structured pattern (not constant) so inversion breaks structure
        ys, xs = np.mgrid[0:64, 0:64]
        pattern = ((np.sin(xs / 3.0) + np.cos(ys / 5.0)) * 60 + 128).astype(np.uint8)
        inverted = (255 - pattern).astype(np.uint8)
        score = ssim(pattern, inverted)
        reference = skimage_ssim(pattern, inverted, data_range=255,
                                 gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False)
        assert score < 0.5
        assert score == pytest.approx(reference, abs=1e-3)

    def test_matches_reference_implementation_on_noisy_pairs(self, image):
        rng = np.random.default_rng(2)
        noisy = np.clip(image + 20 * rng.standard_normal(image.shape), 0, 255).astype(np.uint8)
        mine = ssim(image, noisy)
        ref = skimage_ssim(image, noisy, data_range=255, channel_axis=2,
                           gaussian_weights=True, sigma=1.5,
                           use_sample_covariance=False)
        assert mine == pytest.approx(ref, abs=1e-3)

    def test_ssim_within_valid_range(self, image):
        rng = np.random.default_rng(3)
        other = rng.integers(0, 256, size=image.shape, dtype=np.uint8)
        s = ssim(image, other)
        assert -1.0 <= s <= 1.0


class TestEvaluateDirs:
    def _write_clip(self, root, name, frames):
        from PIL import Image

        d = root / name
        d.mkdir(parents=True)
        for i, f in enumerate(frames):
            Image.fromarray(f).save(d / f"{i:04d}.png")

    def test_report_aggregates_means(self, tmp_path, image):
        shifted = np.clip(image.astype(int) + 16, 0, 255).astype(np.uint8)
        self._write_clip(tmp_path / "pred", "clip_0000", [image, image])
        self._write_clip(tmp_path / "gt", "clip_0000", [shifted, shifted])
        report = evaluate_dirs(tmp_path / "pred", tmp_path / "gt")
        expected = 20.0 * math.log10(255.0 / 16.0)
        assert report.per_clip["clip_0000"].psnr_db == pytest.approx(expected, abs=1e-9)
        assert report.psnr_db == pytest.approx(expected, abs=1e-9)
        assert report.schema_version == "1"

    def test_mismatched_clip_sets_rejected(self, tmp_path, image):
        self._write_clip(tmp_path / "pred", "clip_0000", [image])
        self._write_clip(tmp_path / "gt", "clip_0001", [image])
        with pytest.raises(DataError, match="clip_000"):
            evaluate_dirs(tmp_path / "pred", tmp_path / "gt")

    def test_shape_mismatch_names_clip(self, tmp_path, image):
        self._write_clip(tmp_path / "pred", "clip_0000", [image])
        self._write_clip(tmp_path / "gt", "clip_0000", [image[:32]])
        with pytest.raises(DataError, match="clip_0000"):
            evaluate_dirs(tmp_path / "pred", tmp_path / "gt")

    def test_json_roundtrip(self, tmp_path, image):
        import json

        self._write_clip(tmp_path / "pred", "clip_0000", [image])
        self._write_clip(tmp_path / "gt", "clip_0000", [image])
        report = evaluate_dirs(tmp_path / "pred", tmp_path / "gt")
        data = json.loads(report.to_json())
        assert data["per_clip"]["clip_0000"]["psnr_infinite"] is True
        assert data["per_clip"]["clip_0000"]["ssim"] == pytest.approx(1.0)
