"""
Unit tests for file utilities and process configuration.
"""

import math
from unittest.mock import patch

from src.utils.config import Config
from src.utils.file_utils import stable_float, write_json, write_jsonl


class TestStableOutput:
    """Test cases for stable float formatting."""

    def test_stable_float(self):
        assert stable_float(0.1 + 0.2) == 0.3
        assert stable_float(1 / 3) == 0.333333333
        assert stable_float(0.0) == 0.0
        assert math.isinf(stable_float(float("inf")))

    def test_write_json(self, tmp_path):
        path = tmp_path / "nested" / "doc.json"

        write_json({"b": 1 / 3, "a": [0.1 + 0.2]}, str(path))

        assert path.read_text() == '{\n  "a": [\n    0.3\n  ],\n  "b": 0.333333333\n}\n'

    def test_write_jsonl(self, tmp_path):
        path = tmp_path / "rows.jsonl"

        count = write_jsonl(iter([{"y": 2, "x": 1}, {"x": 0.5}]), str(path))

        assert count == 2
        assert path.read_text() == '{"x": 1, "y": 2}\n{"x": 0.5}\n'


class TestConfig:
    """Test cases for the Config class."""

    def test_defaults(self):
        with patch.dict("os.environ", {}, clear=True):
            settings = Config.from_env()

        assert settings.log_level == "info"
        assert settings.output_directory == "output/"
        assert settings.profile == "h200-pcie5"
        assert settings.seed == 0

    def test_from_env(self):
        environment = {"KVTIER_LOG": "debug", "KVTIER_SEED": "11", "KVTIER_PROFILE": "gh200-nvlink", "KVTIER_LOG_FILE": ""}
        with patch.dict("os.environ", environment, clear=True):
            settings = Config.from_env()

        assert settings.log_level == "debug"
        assert settings.seed == 11
        assert settings.profile == "gh200-nvlink"
        assert settings.log_file == ""
