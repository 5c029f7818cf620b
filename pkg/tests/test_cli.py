"""CLI surface: commands, output layouts, exit codes."""

import json

import numpy as np
import pytest
from PIL import Image

from desmoke.cli import main


@pytest.fixture
def scene_yaml(tmp_path):
    p = tmp_path / "scenes.yaml"
    p.write_text(
        "scenes:\n"
        "  - scenario: diffusion\n"
        "    clip_length: 2\n"
        "    height: 64\n"
        "    width: 64\n"
        "    sources:\n"
        "      - {x: 20.0, y: 20.0}\n"
        "    seed: 5\n"
    )
    return p


class TestSynthCommand:
    def test_layout_and_determinism(self, scene_yaml, tmp_path, capsys):
        out1 = tmp_path / "d1"
        out2 = tmp_path / "d2"
        assert main(["synth", "--config", str(scene_yaml), "--out", str(out1)]) == 0
        assert main(["synth", "--config", str(scene_yaml), "--out", str(out2)]) == 0
        clip = out1 / "clip_0000"
        for sub in ("clean", "smoky", "mask_diff", "mask_amb"):
            assert len(list((clip / sub).glob("*.png"))) == 2
        meta = json.loads((clip / "meta.json").read_text())
        assert meta["schema_version"] == "1"
        assert len(meta["omega"]) == 2
        for rel in sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file()):
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()

    def test_count_expands_scenes(self, scene_yaml, tmp_path):
        out = tmp_path / "many"
        assert main(["synth", "--config", str(scene_yaml), "--out", str(out),
                     "--count", "3", "--seed", "9"]) == 0
        clips = sorted(p.name for p in out.iterdir())
        assert clips == ["clip_0000", "clip_0001", "clip_0002"]
        seeds = {json.loads((out / c / "meta.json").read_text())["scene"]["seed"] for c in clips}
        assert len(seeds) == 3  # each clip got its own derived seed

    def test_missing_config_is_config_error(self, tmp_path):
        rc = main(["synth", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)])
        assert rc == 2


class TestEvalCommand:
    def test_report_written(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        for root in ("pred", "gt"):
            d = tmp_path / root / "clip_0000"
            d.mkdir(parents=True)
            Image.fromarray(img).save(d / "0000.png")
        report_path = tmp_path / "report.json"
        rc = main(["eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
                   "--json", str(report_path)])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["per_clip"]["clip_0000"]["psnr_db"] == 100.0

    def test_mismatch_is_data_error(self, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        rc = main(["eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt")])
        assert rc == 3


class TestTrainInferCommands:
    def test_train_then_infer(self, scene_yaml, tmp_path):
        data = tmp_path / "data"
        assert main(["synth", "--config", str(scene_yaml), "--out", str(data)]) == 0
        cfg = tmp_path / "run.yaml"
        cfg.write_text(
            "model:\n"
            "  num_queries: 8\n"
            "  query_dim: 32\n"
            "  channels: [32, 24, 16, 16]\n"
            "train:\n"
            "  crop_size: 64\n"
            "  batch_size: 1\n"
            "  total_iters: 1\n"
            "  checkpoint_interval: 0\n"
        )
        run = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)]) == 0
        assert (run / "ckpt_final.pt").exists()
        pred = tmp_path / "pred"
        assert main(["infer", "--ckpt", str(run / "ckpt_final.pt"),
                     "--in", str(data), "--out", str(pred)]) == 0
        assert (pred / "clip_0000" / "record.json").exists()
        rc = main(["eval", "--pred", str(pred), "--gt", str(data)])
        assert rc == 0

    def test_bad_checkpoint_is_checkpoint_error(self, tmp_path, scene_yaml):
        data = tmp_path / "data"
        main(["synth", "--config", str(scene_yaml), "--out", str(data)])
        bad = tmp_path / "bad.pt"
        bad.write_bytes(b"junk")
        rc = main(["infer", "--ckpt", str(bad), "--in", str(data), "--out", str(tmp_path / "o")])
        assert rc == 4

    def test_unknown_config_keys_rejected(self, tmp_path, scene_yaml):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("train:\n  not_a_key: 1\n")
        rc = main(["train", "--config", str(cfg), "--data", str(tmp_path), "--out", str(tmp_path)])
        assert rc == 2
