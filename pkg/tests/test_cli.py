"""CLI commands: flags, artifacts, exit codes."""

import numpy as np
import pytest

from hipa.cli import main
from hipa.data import load_png, save_png


@pytest.fixture()
def toy_setup(tmp_path):
    rng = np.random.default_rng(0)
    names = []
    for i in range(3):
        save_png(rng.random((3, 24, 24)).astype(np.float32), tmp_path / f"im{i}.png")
        names.append(f"im{i}.png")
    (tmp_path / "list.txt").write_text("\n".join(names) + "\n")
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "model.channels = 4\n"
        "model.mrfam_per_stage = 1,1,1\n"
        "model.patch_size = 2\n"
        "model.heads = 2\n"
        "model.layers = 1\n"
        "train.lr = 1e-3\n"
        "train.batch_size = 2\n"
        "train.lr_crop = 8\n"
        "train.checkpoint_every = 100\n"
    )
    return tmp_path


class TestTrainCommand:
    def test_run_produces_artifacts(self, toy_setup):
        out = toy_setup / "run"
        code = main(["train", "--config", str(toy_setup / "tiny.cfg"),
                     "--data", str(toy_setup / "list.txt"),
                     "--steps", "5", "--out", str(out)])
        assert code == 0
        assert (out / "ckpt_final.bin").exists()
        log = (out / "train_log.csv").read_text().strip().splitlines()
        assert len(log) == 6  # header + 5 rows

    def test_missing_config_exit_2(self, toy_setup, capsys):
        code = main(["train", "--config", str(toy_setup / "ghost.cfg"),
                     "--data", str(toy_setup / "list.txt"),
                     "--steps", "1", "--out", str(toy_setup / "x")])
        assert code == 2
        assert "ghost.cfg" in capsys.readouterr().err

    def test_missing_data_exit_3(self, toy_setup):
        code = main(["train", "--config", str(toy_setup / "tiny.cfg"),
                     "--data", str(toy_setup / "ghost.txt"),
                     "--steps", "1", "--out", str(toy_setup / "x")])
        assert code == 3

    def test_seed_override_determinism(self, toy_setup):
        args = ["train", "--config", str(toy_setup / "tiny.cfg"),
                "--data", str(toy_setup / "list.txt"), "--steps", "4", "--seed", "7"]
        assert main(args + ["--out", str(toy_setup / "a")]) == 0
        assert main(args + ["--out", str(toy_setup / "b")]) == 0
        a = (toy_setup / "a" / "ckpt_final.bin").read_bytes()
        b = (toy_setup / "b" / "ckpt_final.bin").read_bytes()
        assert a == b


class TestEvalCommand:
    def _train(self, toy_setup, out="run"):
        main(["train", "--config", str(toy_setup / "tiny.cfg"),
              "--data", str(toy_setup / "list.txt"),
              "--steps", "3", "--out", str(toy_setup / out)])
        return toy_setup / out / "ckpt_final.bin"

    def test_eval_writes_report(self, toy_setup, capsys):
        ckpt = self._train(toy_setup)
        out_csv = toy_setup / "report.csv"
        code = main(["eval", "--ckpt", str(ckpt),
                     "--data", str(toy_setup / "list.txt"),
                     "--scale", "2", "--out", str(out_csv)])
        assert code == 0
        lines = out_csv.read_text().strip().splitlines()
        assert len(lines) == 5  # header + 3 images + mean
        assert "mean PSNR" in capsys.readouterr().out

    def test_bicubic_baseline(self, toy_setup):
        out_csv = toy_setup / "bicubic.csv"
        code = main(["eval", "--baseline", "bicubic",
                     "--data", str(toy_setup / "list.txt"),
                     "--scale", "2", "--out", str(out_csv)])
        assert code == 0
        assert out_csv.exists()

    def test_missing_checkpoint_exit_3(self, toy_setup):
        code = main(["eval", "--ckpt", str(toy_setup / "ghost.bin"),
                     "--data", str(toy_setup / "list.txt"),
                     "--scale", "2", "--out", str(toy_setup / "r.csv")])
        assert code == 3

    def test_scale_mismatch_exit_5(self, toy_setup):
        ckpt = self._train(toy_setup)
        code = main(["eval", "--ckpt", str(ckpt),
                     "--data", str(toy_setup / "list.txt"),
                     "--scale", "3", "--out", str(toy_setup / "r.csv")])
        assert code == 5


class TestSrCommand:
    def test_odd_size_shape_contract(self, toy_setup):
        main(["train", "--config", str(toy_setup / "tiny.cfg"),
              "--data", str(toy_setup / "list.txt"),
              "--steps", "2", "--out", str(toy_setup / "run")])
        ckpt = toy_setup / "run" / "ckpt_final.bin"
        odd = toy_setup / "odd.png"
        save_png(np.random.default_rng(1).random((3, 17, 23)).astype(np.float32), odd)
        out = toy_setup / "sr.png"
        code = main(["sr", "--ckpt", str(ckpt), "--in", str(odd), "--out", str(out)])
        assert code == 0
        assert load_png(out).shape == (3, 34, 46)

    def test_emit_stages_writes_three_files(self, toy_setup):
        main(["train", "--config", str(toy_setup / "tiny.cfg"),
              "--data", str(toy_setup / "list.txt"),
              "--steps", "2", "--out", str(toy_setup / "run")])
        ckpt = toy_setup / "run" / "ckpt_final.bin"
        out = toy_setup / "sr.png"
        code = main(["sr", "--ckpt", str(ckpt), "--in", str(toy_setup / "im0.png"),
                     "--out", str(out), "--emit-stages"])
        assert code == 0
        written = sorted(p.name for p in toy_setup.glob("sr*.png"))
        assert written == ["sr.png", "sr_stage1.png", "sr_stage2.png"]

    def test_decode_failure_exit_3(self, toy_setup):
        main(["train", "--config", str(toy_setup / "tiny.cfg"),
              "--data", str(toy_setup / "list.txt"),
              "--steps", "2", "--out", str(toy_setup / "run")])
        bad = toy_setup / "bad.png"
        bad.write_bytes(b"nope")
        code = main(["sr", "--ckpt", str(toy_setup / "run" / "ckpt_final.bin"),
                     "--in", str(bad), "--out", str(toy_setup / "o.png")])
        assert code == 3


class TestAblateCommand:
    def test_ape_suite_three_rows(self, toy_setup):
        out = toy_setup / "ablate"
        code = main(["ablate", "--suite", "ape",
                     "--config", str(toy_setup / "tiny.cfg"),
                     "--data", str(toy_setup / "list.txt"),
                     "--steps", "2", "--out", str(out)])
        assert code == 0
        lines = (out / "comparison.csv").read_text().strip().splitlines()
        assert lines[0] == "variant,mean_psnr,mean_ssim,params"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["pe", "cpe", "ape"]

    def test_patch_suite_two_rows(self, toy_setup):
        out = toy_setup / "ablate"
        code = main(["ablate", "--suite", "patch",
                     "--config", str(toy_setup / "tiny.cfg"),
                     "--data", str(toy_setup / "list.txt"),
                     "--steps", "2", "--out", str(out)])
        assert code == 0
        lines = (out / "comparison.csv").read_text().strip().splitlines()
        assert [ln.split(",")[0] for ln in lines[1:]] == ["variable", "fixed"]

    def test_mrfag_suite_seven_topologies(self, toy_setup):
        out = toy_setup / "ablate"
        code = main(["ablate", "--suite", "mrfag",
                     "--config", str(toy_setup / "tiny.cfg"),
                     "--data", str(toy_setup / "list.txt"),
                     "--steps", "1", "--out", str(out)])
        assert code == 0
        lines = (out / "comparison.csv").read_text().strip().splitlines()
        assert len(lines) == 8
        assert [ln.split(",")[0] for ln in lines[1:]] == [
            "rf1", "rf3", "rf5", "rf1_3", "rf1_5", "rf3_5", "rf1_3_5"]

    def test_variants_share_seed_and_data(self, toy_setup):
        # fairness audit: every variant trains from the same seed on the
        # same manifest, so their sampling streams are identical
        out = toy_setup / "ablate"
        main(["ablate", "--suite", "patch",
              "--config", str(toy_setup / "tiny.cfg"),
              "--data", str(toy_setup / "list.txt"),
              "--steps", "2", "--out", str(out)])
        from hipa.train import load_checkpoint

        a = load_checkpoint(out / "variable" / "ckpt_final.bin")
        b = load_checkpoint(out / "fixed" / "ckpt_final.bin")
        assert a.config.seed == b.config.seed
        assert a.rng_state == b.rng_state  # same number of draws, same stream
