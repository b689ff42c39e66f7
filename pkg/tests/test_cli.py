import os

import numpy as np
import pytest

from phaseinterp.cli import (
    ConfigError,
    main,
    padded_canvas,
    parse_config_file,
    resolve_settings,
)
from phaseinterp.images import load_image, save_image
from phaseinterp.pyramid import PyramidConfig


def write_png(path, arr):
    save_image(str(path), arr)
    return str(path)


@pytest.fixture()
def texture_pair(tmp_path):
    rng = np.random.default_rng(0)
    from phaseinterp.data import _smooth_texture, fourier_shift

    tex = _smooth_texture(64, rng)
    f1 = write_png(tmp_path / "f1.png", tex)
    f2 = write_png(tmp_path / "f2.png", fourier_shift(tex, (0.0, 2.0)))
    return f1, f2


class TestConfigFile:
    def test_parse_and_merge(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment\nseed = 7\nlevels = 6\nflip_horizontal = false\n"
            "learning_rate = 0.01  # inline comment\n"
        )
        values = parse_config_file(str(cfg))
        assert values == {
            "seed": 7,
            "levels": 6,
            "flip_horizontal": False,
            "learning_rate": 0.01,
        }

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("not_a_key = 3\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_file(str(cfg))

    def test_bad_value_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed = banana\n")
        with pytest.raises(ConfigError):
            parse_config_file(str(cfg))

    def test_flags_win_over_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed = 7\nlevels = 6\n")

        class Args:
            config = str(cfg)
            seed = 99
            levels = None

        settings = resolve_settings(Args())
        assert settings["seed"] == 99
        assert settings["levels"] == 6


class TestPadding:
    def test_hd_frame_pads_to_reference_canvas(self):
        cfg = PyramidConfig(levels=14)
        assert padded_canvas((720, 1280), cfg) == (1024, 2048)

    def test_power_of_two_input_unpadded(self):
        cfg = PyramidConfig(levels=6)
        assert padded_canvas((64, 64), cfg) == (64, 64)

    def test_canvas_grows_until_ladder_fits(self):
        cfg = PyramidConfig(levels=10)
        canvas = padded_canvas((40, 40), cfg)
        assert canvas[0] >= 64  # 40 -> 64 is too small for 10 levels? grows


class TestDecomposeCommand:
    def test_writes_levels_and_container(self, tmp_path):
        rng = np.random.default_rng(1)
        img = write_png(tmp_path / "img.png", rng.random((48, 48)))
        out = str(tmp_path / "dump")
        rc = main(["decompose", img, "--levels", "3", "-o", out])
        assert rc == 0
        files = os.listdir(out)
        assert "decomposition.bin" in files
        assert "lowpass.png" in files and "highpass.png" in files
        assert sum(f.startswith("amplitude") for f in files) == 12
        assert sum(f.startswith("phase") for f in files) == 12

    def test_default_depth_on_reference_size(self, tmp_path):
        rng = np.random.default_rng(7)
        img = write_png(tmp_path / "img.png", rng.random((256, 256)))
        out = str(tmp_path / "dump")
        rc = main(["decompose", img, "-o", out])
        assert rc == 0
        files = os.listdir(out)
        # ten oriented levels of four orientations, plus the two residuals
        assert sum(f.startswith("amplitude") for f in files) == 40
        assert "lowpass.png" in files and "highpass.png" in files

    def test_non_square_uses_general_ladder(self, tmp_path):
        rng = np.random.default_rng(2)
        img = write_png(tmp_path / "img.png", rng.random((200, 300)))
        rc = main(["decompose", img, "--levels", "4", "-o", str(tmp_path / "d")])
        assert rc == 0

    def test_corrupt_file_fails_cleanly(self, tmp_path, capsys):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not an image at all")
        rc = main(["decompose", str(bad), "-o", str(tmp_path / "d")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_too_small_for_levels(self, tmp_path):
        img = write_png(tmp_path / "img.png", np.zeros((16, 16)))
        rc = main(["decompose", img, "--levels", "10", "-o", str(tmp_path / "d")])
        assert rc == 1


class TestInterpolateCommand:
    def test_average(self, texture_pair, tmp_path):
        f1, f2 = texture_pair
        out = str(tmp_path / "mid.png")
        rc = main(["interpolate", f1, f2, "--method", "average", "-o", out,
                   "--levels", "4"])
        assert rc == 0
        mid = load_image(out)
        expected = 0.5 * (load_image(f1) + load_image(f2))
        assert np.mean(np.abs(mid - expected)) < 2e-3  # 8-bit quantization

    def test_baseline_zero_motion(self, tmp_path):
        rng = np.random.default_rng(3)
        from phaseinterp.data import _smooth_texture

        tex = _smooth_texture(64, rng)
        f = write_png(tmp_path / "f.png", tex)
        out = str(tmp_path / "mid.png")
        rc = main(["interpolate", f, f, "--method", "baseline", "-o", out,
                   "--levels", "4"])
        assert rc == 0
        assert np.mean(np.abs(load_image(out) - tex)) < 0.02

    def test_phasenet_with_checkpoint(self, texture_pair, tmp_path):
        data = make_dataset_dir(tmp_path, n_seq=2, frames=3, size=64)
        run = str(tmp_path / "run")
        rc = main(["train", data, "-o", run, "--levels", "4", "--patch-size", "64",
                   "--epochs", "1", "--batch-size", "4", "--feature-width", "8",
                   "--seed", "1"])
        assert rc == 0
        f1, f2 = texture_pair
        out = str(tmp_path / "mid.png")
        ckpt = os.path.join(run, "final.ckpt")
        rc = main(["interpolate", f1, f2, "--method", "phasenet",
                   "--checkpoint", ckpt, "--levels", "4", "-o", out])
        assert rc == 0
        mid = load_image(out)
        assert mid.shape == (64, 64)
        assert np.all(np.isfinite(mid))
        # requesting more levels than trained exercises the extension path
        rc = main(["interpolate", f1, f2, "--method", "phasenet",
                   "--checkpoint", ckpt, "--levels", "6", "-o", out])
        assert rc == 0
        # fewer levels than trained is rejected
        rc = main(["interpolate", f1, f2, "--method", "phasenet",
                   "--checkpoint", ckpt, "--levels", "3", "-o", out])
        assert rc == 1
        # without --levels the checkpoint's trained depth is used
        rc = main(["interpolate", f1, f2, "--method", "phasenet",
                   "--checkpoint", ckpt, "-o", out])
        assert rc == 0

    def test_phasenet_requires_checkpoint(self, texture_pair, tmp_path, capsys):
        f1, f2 = texture_pair
        rc = main(["interpolate", f1, f2, "--method", "phasenet",
                   "-o", str(tmp_path / "mid.png")])
        assert rc == 1
        assert "checkpoint" in capsys.readouterr().err

    def test_size_mismatch(self, tmp_path):
        a = write_png(tmp_path / "a.png", np.zeros((32, 32)))
        b = write_png(tmp_path / "b.png", np.zeros((32, 48)))
        rc = main(["interpolate", a, b, "--method", "average",
                   "-o", str(tmp_path / "m.png")])
        assert rc == 1


def make_dataset_dir(tmp_path, n_seq=2, frames=4, size=32):
    root = tmp_path / "data"
    rng = np.random.default_rng(0)
    from phaseinterp.data import _smooth_texture, fourier_shift

    for s in range(n_seq):
        seq = root / f"seq{s}"
        os.makedirs(seq)
        tex = _smooth_texture(size, rng)
        for i in range(frames):
            save_image(str(seq / f"f{i:02d}.png"), fourier_shift(tex, (0, 1.5 * i)))
    return str(root)


class TestTrainCommand:
    def test_end_to_end_tiny(self, tmp_path):
        data = make_dataset_dir(tmp_path)
        out = str(tmp_path / "run")
        rc = main([
            "train", data, "-o", out, "--levels", "3", "--patch-size", "32",
            "--epochs", "1", "--batch-size", "4", "--feature-width", "8",
            "--seed", "3",
        ])
        assert rc == 0
        files = os.listdir(out)
        assert "final.ckpt" in files
        assert "train_log.jsonl" in files
        log_lines = open(os.path.join(out, "train_log.jsonl")).readlines()
        assert len(log_lines) == 4  # 4 stages x 1 epoch
        import json

        rec = json.loads(log_lines[0])
        assert {"stage", "epoch", "image_term", "phase_term", "total"} <= set(rec)

    def test_missing_dataset_writes_nothing(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        rc = main(["train", str(tmp_path / "nope"), "-o", out])
        assert rc == 1
        assert not os.path.exists(out)


class TestEvalCommand:
    def test_passthrough_and_average_table(self, tmp_path, capsys):
        seq = tmp_path / "seq"
        os.makedirs(seq)
        rng = np.random.default_rng(4)
        from phaseinterp.data import _smooth_texture

        for i in range(4):
            save_image(str(seq / f"f{i}.png"), _smooth_texture(32, rng))
        out = str(tmp_path / "report")
        rc = main(["eval", str(seq), "--method", "passthrough,average",
                   "--levels", "3", "-o", out])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "passthrough" in stdout and "average" in stdout
        assert os.path.exists(os.path.join(out, "report.txt"))
        records = open(os.path.join(out, "records.jsonl")).read()
        assert '"mean_psnr"' in records

    def test_too_few_frames(self, tmp_path):
        seq = tmp_path / "seq"
        os.makedirs(seq)
        save_image(str(seq / "f0.png"), np.zeros((32, 32)))
        save_image(str(seq / "f1.png"), np.zeros((32, 32)))
        rc = main(["eval", str(seq), "--method", "average"])
        assert rc == 1


class TestInfoCommand:
    def test_prints_parameter_count_and_table(self, capsys):
        rc = main(["info"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "trainable parameters" in out
        assert "8x8" in out and "256x256" in out

    def test_checkpoint_info(self, tmp_path, capsys):
        data = make_dataset_dir(tmp_path)
        out = str(tmp_path / "run")
        main(["train", data, "-o", out, "--levels", "3", "--patch-size", "32",
              "--epochs", "1", "--batch-size", "4", "--feature-width", "8"])
        rc = main(["info", "--checkpoint", os.path.join(out, "final.ckpt"),
                   "--levels", "3", "--size", "32x32"])
        assert rc == 0
        assert "4 blocks" in capsys.readouterr().out
