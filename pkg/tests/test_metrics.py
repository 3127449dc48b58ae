"""PSNR/SSIM semantics and the evaluation report."""

import math

import numpy as np
import pytest

from hipa.autodiff import Tensor
from hipa.config import HipaConfig
from hipa.data import SRDataset, load_manifest, make_pair, save_png
from hipa.errors import ShapeMismatch, TooSmall
from hipa.metrics import (
    EvalReport,
    SSIM_C1,
    bicubic_predictor,
    evaluate,
    psnr,
    ssim,
)
from hipa.model import HipaModel


def plane(seed, shape=(1, 24, 24)):
    return Tensor(np.random.default_rng(seed).random(shape).astype(np.float32))


class TestPsnr:
    def test_identical_is_infinite(self):
        a = plane(0)
        assert math.isinf(psnr(a, a))

    def test_uniform_offset_closed_form(self):
        a = Tensor(np.zeros((1, 16, 16), dtype=np.float64))
        b = Tensor(np.full((1, 16, 16), 0.1, dtype=np.float64))
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_border_crop_region(self):
        a = np.zeros((1, 16, 16), dtype=np.float32)
        b = a.copy()
        b[0, 0, 0] = 1.0  # corrupt a border pixel only
        assert math.isinf(psnr(Tensor(a), Tensor(b), border=4))
        assert not math.isinf(psnr(Tensor(a), Tensor(b), border=0))

    def test_monotone_under_noise(self):
        rng = np.random.default_rng(1)
        a = rng.random((1, 32, 32))
        values = []
        for amp in (0.01, 0.05, 0.2):
            noise = rng.uniform(-amp, amp, size=a.shape)
            values.append(psnr(Tensor(a), Tensor(np.clip(a + noise, 0, 1))))
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            psnr(plane(2), plane(3, (1, 20, 20)))


class TestSsim:
    def test_identical_is_one(self):
        a = plane(4)
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_images_closed_form(self):
        mu_a, mu_b = 0.4, 0.5
        a = Tensor(np.full((1, 16, 16), mu_a, dtype=np.float64))
        b = Tensor(np.full((1, 16, 16), mu_b, dtype=np.float64))
        expected = (2 * mu_a * mu_b + SSIM_C1) / (mu_a ** 2 + mu_b ** 2 + SSIM_C1)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-9)

    def test_symmetry(self):
        a, b = plane(5), plane(6)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a = Tensor(rng.random((1, 16, 16)))
            b = Tensor(rng.random((1, 16, 16)))
            assert -1.0 <= ssim(a, b) <= 1.0

    def test_less_than_one_when_different(self):
        a, b = plane(8), plane(9)
        assert ssim(a, b) < 1.0

    def test_too_small(self):
        with pytest.raises(TooSmall):
            ssim(plane(10, (1, 10, 10)), plane(11, (1, 10, 10)))
        with pytest.raises(TooSmall):
            ssim(plane(12, (1, 14, 14)), plane(13, (1, 14, 14)), border=4)


class TestEvalReport:
    def _toy_dataset(self, tmp_path, n=3, size=48):
        rng = np.random.default_rng(14)
        names = []
        for i in range(n):
            save_png(rng.random((3, size, size)).astype(np.float32),
                     tmp_path / f"im{i}.png")
            names.append(f"im{i}.png")
        (tmp_path / "list.txt").write_text("\n".join(names) + "\n")
        return SRDataset(load_manifest(tmp_path / "list.txt", scale=2))

    def test_identity_predictor_maxes_metrics(self, tmp_path):
        ds = self._toy_dataset(tmp_path, n=1)
        scale = 2

        def perfect(lr):
            return Tensor(ds[0].hr.data[None])

        report = evaluate(perfect, ds, scale)
        assert math.isinf(report.mean_psnr)
        assert report.mean_ssim == pytest.approx(1.0, abs=1e-9)
        assert "inf" in report.to_csv()

    def test_row_per_image_plus_mean(self, tmp_path):
        ds = self._toy_dataset(tmp_path)
        report = evaluate(bicubic_predictor(2), ds, 2)
        assert len(report.rows) == len(ds)
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "id,psnr_db,ssim"
        assert len(lines) == len(ds) + 2
        assert lines[-1].startswith("mean,")

    def test_bicubic_beats_random_model(self, tmp_path):
        ds = self._toy_dataset(tmp_path)
        cfg = HipaConfig(channels=4, mrfam_per_stage=(1, 1, 1), lr_crop=8)
        model = HipaModel(cfg)
        model_rep = evaluate(lambda lr: model.super_resolve(lr), ds, 2)
        bicubic_rep = evaluate(bicubic_predictor(2), ds, 2)
        assert bicubic_rep.mean_psnr > model_rep.mean_psnr

    def test_evaluation_pure(self, tmp_path):
        ds = self._toy_dataset(tmp_path, n=2)
        cfg = HipaConfig(channels=4, mrfam_per_stage=(1, 1, 1), lr_crop=8)
        model = HipaModel(cfg)
        r1 = evaluate(lambda lr: model.super_resolve(lr), ds, 2)
        r2 = evaluate(lambda lr: model.super_resolve(lr), ds, 2)
        assert r1.rows == r2.rows

    def test_csv_write_atomic(self, tmp_path):
        report = EvalReport(scale=2, border=2)
        report.add("a.png", 30.0, 0.9)
        out = tmp_path / "report.csv"
        report.write_csv(out)
        assert out.read_text().startswith("id,psnr_db,ssim")
        assert not (tmp_path / "report.csv.tmp").exists()
