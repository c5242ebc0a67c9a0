import csv
import io

import numpy as np
import pytest
from _images import synthetic_image

from fitsr import checkpoint
from fitsr.cli import main, parse_scale
from fitsr.imageio import read_png, write_png
from fitsr.model import ModelParams, tiny_config
from fitsr.train import bilinear_resize

TINY = """\
channels=8
encoder_depth=2
fim_blocks=1
pe_hidden=16
decoder_hidden=16
batch_size=1
patch=8
samples=64
epochs=200
warmup=20
"""


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "data").mkdir()
    write_png(tmp_path / "data" / "img.png", synthetic_image(32))
    (tmp_path / "tiny.cfg").write_text(TINY)
    return tmp_path


def _zero_decoder_checkpoint(path):
    p = ModelParams.init(tiny_config(), 0).zero("dec.")
    checkpoint.save(path, p)
    return path


def test_parse_scale():
    assert parse_scale("2") == (2.0, 2.0)
    assert parse_scale("1.5, 3") == (1.5, 3.0)


class TestTrain:
    def test_empty_dir(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        assert main(["train", str(tmp_path / "empty"), "--out", str(tmp_path / "m")]) == 1
        assert "no training images found" in capsys.readouterr().err

    def test_unknown_config_key(self, workspace, capsys):
        (workspace / "bad.cfg").write_text("channels=8\nlearning_rate=3\n")
        rc = main(["--config", str(workspace / "bad.cfg"), "train", str(workspace / "data"),
                   "--out", str(workspace / "m")])
        assert rc == 1 and "learning_rate" in capsys.readouterr().err

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 1

    def test_200_step_run(self, workspace):
        out = workspace / "m.fitc"
        rc = main(["--seed", "1", "--config", str(workspace / "tiny.cfg"), "train",
                   str(workspace / "data"), "--out", str(out), "--figures", str(workspace / "f")])
        assert rc == 0 and out.exists()
        rows = list(csv.reader(open(workspace / "m.log.csv")))
        assert rows[0] == ["step", "loss", "lr"] and len(rows) == 201
        assert checkpoint.load(out).iteration == 200
        assert (workspace / "f" / "loss_curve.png").exists()

    def test_same_seed_same_log(self, workspace):
        logs = []
        for i in range(2):
            out = workspace / f"m{i}.fitc"
            main(["--seed", "7", "--config", str(workspace / "tiny.cfg"), "train",
                  str(workspace / "data"), "--out", str(out), "--steps", "5"])
            logs.append((out.read_bytes(), (workspace / f"m{i}.log.csv").read_bytes()))
        assert logs[0] == logs[1]

    def test_seed_matters(self, workspace):
        logs = []
        for seed in ("1", "2"):
            out = workspace / f"s{seed}.fitc"
            main(["--seed", seed, "--config", str(workspace / "tiny.cfg"), "train",
                  str(workspace / "data"), "--out", str(out), "--steps", "3"])
            logs.append((workspace / f"s{seed}.log.csv").read_bytes())
        assert logs[0] != logs[1]


class TestInfer:
    def test_noninteger_shape(self, workspace):
        ck = _zero_decoder_checkpoint(workspace / "z.fitc")
        src = workspace / "in.png"
        write_png(src, np.random.default_rng(0).uniform(size=(3, 50, 40)))
        assert main(["infer", str(ck), str(src), "--scale", "1.8", "--out", str(workspace / "o.png")]) == 0
        assert read_png(workspace / "o.png").shape == (3, 90, 72)

    def test_zero_decoder_matches_bilinear(self, workspace):
        ck = _zero_decoder_checkpoint(workspace / "z.fitc")
        src = workspace / "data" / "img.png"
        main(["infer", str(ck), str(src), "--scale", "2,3", "--out", str(workspace / "o.png")])
        got = read_png(workspace / "o.png")
        want = bilinear_resize(read_png(src), 64, 96)
        assert np.abs(got - want).max() <= 1 / 255 + 1e-12

    def test_beyond_training_range(self, workspace):
        ck = _zero_decoder_checkpoint(workspace / "z.fitc")
        src = workspace / "in.png"
        write_png(src, np.zeros((3, 5, 5)))
        assert main(["infer", str(ck), str(src), "--scale", "4.2", "--out", str(workspace / "o.png")]) == 0
        assert read_png(workspace / "o.png").shape == (3, 21, 21)

    def test_downscale_rejected(self, workspace, capsys):
        ck = _zero_decoder_checkpoint(workspace / "z.fitc")
        rc = main(["infer", str(ck), str(workspace / "data" / "img.png"), "--scale", "0.5",
                   "--out", str(workspace / "o.png")])
        assert rc == 1 and ">= 1" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, workspace, capsys):
        bad = workspace / "bad.fitc"
        bad.write_bytes(b"NOPE" + b"\0" * 20)
        rc = main(["infer", str(bad), str(workspace / "data" / "img.png"), "--scale", "2",
                   "--out", str(workspace / "o.png")])
        assert rc == 1 and "magic" in capsys.readouterr().err


class TestEval:
    def test_three_scale_columns(self, workspace, capsys):
        assert main(["eval", "bicubic", str(workspace / "data"), "--scales", "2,3,4"]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == ["image", "x2", "x3", "x4"]
        assert [r[0] for r in rows[1:]] == ["img.png", "mean"]
        assert all(15 < float(v) < 99 for v in rows[1][1:])

    def test_identity_rows_are_capped(self, workspace, capsys):
        main(["eval", "identity", str(workspace / "data"), "--scales", "2,3"])
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[1][1:] == ["99.0000", "99.0000"]

    def test_unreadable_skipped_and_counted(self, workspace, capsys):
        (workspace / "data" / "broken.png").write_bytes(b"not an image")
        write_png(workspace / "data" / "other.png", synthetic_image(24, seed=1))
        assert main(["eval", "bicubic", str(workspace / "data"), "--scales", "2",
                     "--out", str(workspace / "t.csv")]) == 0
        err = capsys.readouterr().err
        assert "skipping broken.png" in err and "skipped 1" in err
        rows = list(csv.reader(open(workspace / "t.csv")))
        assert [r[0] for r in rows[1:]] == ["img.png", "other.png", "mean"]

    def test_thread_count_does_not_change_table(self, workspace, monkeypatch):
        write_png(workspace / "data" / "other.png", synthetic_image(24, seed=1))
        ck = _zero_decoder_checkpoint(workspace / "z.fitc")
        outs = []
        for n in ("1", "3"):
            monkeypatch.setenv("FIT_THREADS", n)
            path = workspace / f"t{n}.csv"
            main(["eval", str(ck), str(workspace / "data"), "--scales", "2", "--out", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_bad_thread_env(self, workspace, monkeypatch):
        monkeypatch.setenv("FIT_THREADS", "zero")
        assert main(["eval", "bicubic", str(workspace / "data")]) == 1

    def test_figure(self, workspace):
        main(["eval", "bicubic", str(workspace / "data"), "--scales", "2,4",
              "--out", str(workspace / "t.csv"), "--figures", str(workspace / "f")])
        assert (workspace / "f" / "psnr_by_scale.png").exists()


def test_fem_outputs(workspace, capsys):
    hr = workspace / "data" / "img.png"
    assert main(["fem", str(hr), str(hr), "--out", str(workspace / "fem.png"),
                 "--csv", str(workspace / "fem.csv"), "--figures", str(workspace / "f")]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "0.000000e+00,0.000000e+00"
    assert np.loadtxt(workspace / "fem.csv", delimiter=",").shape == (32, 32)
    render = read_png(workspace / "fem.png")
    assert np.all(render[1] > render[0])
    assert (workspace / "f" / "fem_figure.png").exists()


def test_grad_check_verb(capsys):
    assert main(["grad-check", "--case", "quadratic", "--case", "decoder"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "case,rel_err,tol,status" and len(out) == 3
    assert all(line.endswith("PASS") for line in out[1:])


def test_grad_check_unknown_case():
    assert main(["grad-check", "--case", "nope"]) == 1
