"""Config file parsing: strictness, canonical rendering, validation."""

import pytest

from hipa.config import (
    HipaConfig,
    config_to_text,
    load_config,
    parse_config_text,
)
from hipa.errors import ConfigError


class TestParsing:
    def test_full_roundtrip(self):
        cfg = HipaConfig(scale=3, channels=16, mrfam_per_stage=(2, 3, 4),
                         residual_blocks=2, patch_size=4, heads=4, layers=2,
                         ape_mode="cpe", hierarchy_mode="fixed", branches=(1, 3),
                         loss_weights=(0.5, 1.0, 2.0), seed=99, lr=5e-4,
                         batch_size=8, lr_crop=16, checkpoint_every=50)
        text = config_to_text(cfg)
        assert parse_config_text(text) == cfg
        # canonical: rendering the parse reproduces the text
        assert config_to_text(parse_config_text(text)) == text

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text(
            "# header\n\nmodel.scale = 3  # inline\n\ntrain.seed = 4\n")
        assert cfg.scale == 3
        assert cfg.seed == 4

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("model.patchsize = 4\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("model.scale = 2\nmodel.scale = 3\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("model.scale: 2\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config_text("model.scale = two\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.cfg")


class TestValidation:
    def test_defaults_valid(self):
        HipaConfig().validate()

    @pytest.mark.parametrize("overrides", [
        dict(scale=5),
        dict(mrfam_per_stage=(0, 1, 1)),
        dict(mrfam_per_stage=(1, 1)),
        dict(residual_blocks=0),
        dict(heads=3),            # does not divide P^2*C = 32
        dict(ape_mode="rope"),
        dict(hierarchy_mode="pyramid"),
        dict(branches=()),
        dict(branches=(1, 1)),
        dict(branches=(4,)),
        dict(loss_weights=(1.0, 1.0)),
        dict(lr=0.0),
        dict(batch_size=0),
        dict(lr_crop=10),         # not divisible by 2*P = 4
        dict(checkpoint_every=0),
    ])
    def test_invalid_rejected(self, overrides):
        with pytest.raises(ConfigError):
            HipaConfig(**overrides).validate()


class TestShippedPresets:
    def test_desk_preset(self):
        cfg = load_config("configs/desk.cfg")
        assert cfg.scale == 2
        assert cfg.channels == 8
        assert cfg.mrfam_per_stage == (1, 1, 2)
        assert cfg.patch_size == 2
        assert cfg.heads == 2
        assert cfg.layers == 1

    def test_paper_preset(self):
        cfg = load_config("configs/paper.cfg")
        assert cfg.scale == 4
        assert cfg.channels == 64
        assert cfg.mrfam_per_stage == (5, 5, 20)
        assert cfg.residual_blocks == 5
        assert cfg.patch_size == 4
        assert cfg.heads == 4
        assert cfg.layers == 4
        assert cfg.lr == pytest.approx(1e-4)
        assert cfg.lr_crop == 48
