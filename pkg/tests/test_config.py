"""Experiment configuration parsing."""

import pytest

from increport.config import load_experiment, parse_experiment
from increport.errors import ConfigError
from increport.reports import SamplingConfig

FULL = """\
[run]
parallel = 2
seed = 11
temperature = 0.5
max_output_tokens = 512

[stage1]
base_url = http://cap.local/v1
model_name = cap-vlm
api_key_env = CAP_KEY
frame_interval = 5

[stage2]
base_url = http://det.local/v1
model_name = det-llm

[stage3]
base_url = http://rep.local/v1
model_name = rep-vlm
ks = 2,6
ts = 6,8
gaze = true

[ensemble]
base_url = http://ens.local/v1
model_name = ens-llm
"""


def write_config(tmp_path, text=FULL, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestParsing:
    def test_full_document(self, tmp_path):
        cfg = load_experiment(write_config(tmp_path))
        assert cfg.stage1_endpoint.base_url == "http://cap.local/v1"
        assert cfg.stage1_endpoint.model_name == "cap-vlm"
        assert cfg.stage1_endpoint.api_key_env == "CAP_KEY"
        assert cfg.stage2_endpoint.model_name == "det-llm"
        assert cfg.stage3_endpoint.model_name == "rep-vlm"
        assert cfg.ensemble_endpoint.model_name == "ens-llm"
        assert cfg.stage1_k == 5
        assert cfg.stage3_gaze is True
        assert cfg.parallel == 2
        assert cfg.seed == 11
        assert cfg.temperature == 0.5
        assert cfg.max_output_tokens == 512
        assert cfg.raw == FULL

    def test_grid_is_k_major_product(self, tmp_path):
        cfg = load_experiment(write_config(tmp_path))
        assert cfg.grid == (
            SamplingConfig(2, 6), SamplingConfig(2, 8),
            SamplingConfig(6, 6), SamplingConfig(6, 8),
        )

    def test_defaults(self, tmp_path):
        text = "\n".join(
            f"[{s}]\nbase_url = http://{s}.local\nmodel_name = m-{s}"
            for s in ("stage1", "stage2", "stage3")
        ) + "\n[ensemble]\nbase_url = http://ens.local\n"
        cfg = load_experiment(write_config(tmp_path, text))
        assert cfg.stage1_k == 10
        assert [(g.k, g.t) for g in cfg.grid] == [
            (k, t) for k in (2, 6, 11, 12) for t in (6, 8, 10)
        ]
        assert cfg.parallel == 4
        assert cfg.seed == 0
        assert cfg.temperature == 0.0
        assert cfg.max_output_tokens == 2048
        assert cfg.stage3_gaze is False
        assert cfg.prompts_dir is None
        assert cfg.ensemble_endpoint.model_name == "Qwen3-Next-80B-A3B-Instruct"

    def test_prompts_dir_resolves_relative_to_config(self, tmp_path):
        (tmp_path / "mine").mkdir()
        text = FULL + "\n[prompts]\ndir = mine\n"
        cfg = load_experiment(write_config(tmp_path, text))
        assert cfg.prompts_dir == tmp_path / "mine"

    def test_parse_from_string_matches_file(self, tmp_path):
        from_file = load_experiment(write_config(tmp_path))
        from_text = parse_experiment(FULL, origin="embedded")
        assert from_text.grid == from_file.grid
        assert from_text.stage1_endpoint == from_file.stage1_endpoint


class TestErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_experiment(tmp_path / "absent.ini")

    def test_missing_section_named(self, tmp_path):
        text = FULL.replace("[stage2]", "[stagex]")
        with pytest.raises(ConfigError, match=r"\[stage2\]"):
            load_experiment(write_config(tmp_path, text))

    def test_missing_base_url(self, tmp_path):
        text = FULL.replace("base_url = http://det.local/v1", "")
        with pytest.raises(ConfigError, match="base_url"):
            load_experiment(write_config(tmp_path, text))

    def test_missing_model_name(self, tmp_path):
        text = FULL.replace("model_name = det-llm", "")
        with pytest.raises(ConfigError, match="model_name"):
            load_experiment(write_config(tmp_path, text))

    def test_empty_grid_rejected(self, tmp_path):
        text = FULL.replace("ks = 2,6", "ks = ,")
        with pytest.raises(ConfigError, match="ks"):
            load_experiment(write_config(tmp_path, text))

    def test_non_integer_grid_rejected(self, tmp_path):
        text = FULL.replace("ts = 6,8", "ts = 6,eight")
        with pytest.raises(ConfigError, match="ts"):
            load_experiment(write_config(tmp_path, text))

    def test_invalid_k_rejected(self, tmp_path):
        text = FULL.replace("ks = 2,6", "ks = 0,6")
        with pytest.raises(ConfigError, match="grid"):
            load_experiment(write_config(tmp_path, text))

    def test_bad_parallel_rejected(self, tmp_path):
        text = FULL.replace("parallel = 2", "parallel = 0")
        with pytest.raises(ConfigError, match="parallel"):
            load_experiment(write_config(tmp_path, text))

    def test_bad_gaze_flag_rejected(self, tmp_path):
        text = FULL.replace("gaze = true", "gaze = maybe")
        with pytest.raises(ConfigError, match="gaze"):
            load_experiment(write_config(tmp_path, text))

    def test_bad_ini_syntax(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment(write_config(tmp_path, "just text, no sections"))
