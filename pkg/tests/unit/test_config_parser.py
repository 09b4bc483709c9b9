"""
Unit tests for the ConfigParser class.
"""

import os

import pytest

from src.core.exceptions import ConfigError
from src.core.sim_config import Pattern, link_key
from src.core.tier import Layout, TierId
from src.core.transfer import DmaCopyBackend, GpuAssistBackend, OracleBackend
from src.parsers.config_parser import ConfigParser, default_run_config

SAMPLE_CONFIG = os.path.join(os.path.dirname(__file__), "..", "fixtures", "sample_config.ini")

MINIMAL = "[run]\nconfig_version = 1\n"


class TestConfigParser:
    """Test cases for the ConfigParser class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.parser = ConfigParser()

    def test_parse_sample_file(self):
        """Test parsing the sample run configuration."""
        run_config = self.parser.parse_file(SAMPLE_CONFIG)
        engine = run_config.engine

        assert run_config.seed == 3
        assert engine.seed == 3
        assert engine.geometry.page_size_tokens == 16
        assert engine.geometry.bytes_per_token == 4096
        assert engine.tier_spec(TierId.DEVICE).capacity == 65536 * 4096
        assert engine.tier_spec(TierId.HOST).layout == Layout.PAGE_FIRST
        assert engine.tier_spec(TierId.DISK) is None
        assert isinstance(engine.backend, GpuAssistBackend)
        assert engine.backend.blocks == 2
        assert engine.compute.prefill_token_cost == 1e-5
        assert engine.compute.num_layers == 4
        assert engine.scheduler.max_batch_tokens == 8192
        assert engine.scheduler.deferral_threshold == 64
        assert engine.scheduler.loading_bound_ratio == 100.0
        assert engine.max_inflight == 32

    def test_sample_workload(self):
        workload = self.parser.parse_file(SAMPLE_CONFIG).workload

        assert workload.num_contexts == 3
        assert workload.pattern == Pattern.SHUFFLE
        assert workload.context_len.mean == 1024.0
        assert workload.rate == 20.0
        assert workload.seed == 3

    def test_minimal_config_uses_profile(self):
        """Test that omitted values come from the hardware profile."""
        run_config = self.parser.parse_string(MINIMAL)

        assert run_config.workload is None
        assert run_config.engine.profile == "h200-pcie5"
        assert run_config.engine.tier_spec(TierId.HOST).capacity == 400 * 10**9

    def test_profile_argument_overrides_file(self):
        run_config = self.parser.parse_string(MINIMAL + "profile = h200-pcie5\n", profile="gh200-nvlink")

        assert run_config.engine.profile == "gh200-nvlink"

    def test_disk_section_adds_tier_and_link(self):
        run_config = self.parser.parse_string(MINIMAL + "[disk]\nlayout = page_first\n")
        engine = run_config.engine

        assert engine.tier_spec(TierId.DISK).capacity == 4 * 10**12
        assert link_key(TierId.HOST, TierId.DISK) in engine.links

    def test_backend_kinds(self):
        oracle = self.parser.parse_string(MINIMAL + "[backend]\nkind = oracle\n")
        dma = self.parser.parse_string(MINIMAL + "[backend]\nkind = dma\nmax_concurrency = 8\n")

        assert isinstance(oracle.engine.backend, OracleBackend)
        assert isinstance(dma.engine.backend, DmaCopyBackend)
        assert dma.engine.backend.max_concurrency == 8

    def test_copy_engine_defaults_to_layer_first_host(self):
        """Test that the copy engine defaults host and disk to layer-first unless a layout is set."""
        dma = self.parser.parse_string(MINIMAL + "[backend]\nkind = dma\n[disk]\n").engine
        gpu = self.parser.parse_string(MINIMAL + "[disk]\n").engine
        pinned = self.parser.parse_string(MINIMAL + "[backend]\nkind = dma\n[host]\nlayout = page_first\n").engine

        assert dma.tier_spec(TierId.HOST).layout == Layout.LAYER_FIRST
        assert dma.tier_spec(TierId.DISK).layout == Layout.LAYER_FIRST
        assert gpu.tier_spec(TierId.HOST).layout == Layout.PAGE_FIRST
        assert gpu.tier_spec(TierId.DISK).layout == Layout.PAGE_FIRST
        assert pinned.tier_spec(TierId.HOST).layout == Layout.PAGE_FIRST

    def test_backend_field_must_match_kind(self):
        with pytest.raises(ConfigError, match="not valid for backend kind gpu"):
            self.parser.parse_string(MINIMAL + "[backend]\nkind = gpu\nper_op_latency = 1e-5\n")

    def test_workload_profile(self):
        run_config = self.parser.parse_string(MINIMAL + "[workload]\nprofile = loogle\nrate = 3\n")

        assert run_config.workload.num_contexts == 105
        assert run_config.workload.rate == 3.0

    def test_workload_spread(self):
        run_config = self.parser.parse_string(MINIMAL + "[workload]\ncontext_len = 100\nspread = 0\n")

        assert run_config.workload.context_len.low == 100
        assert run_config.workload.context_len.high == 100

    def test_efficiency_anchors(self):
        run_config = self.parser.parse_string(MINIMAL + "[link.device-host]\nefficiency_anchors = 1024:0.5, 4096:0.9\n")

        link = run_config.engine.link(TierId.DEVICE, TierId.HOST)
        assert link.efficiency_anchors == ((1024, 0.5), (4096, 0.9))
        assert link.peak_bandwidth == 64e9

    def test_malformed_anchor(self):
        with pytest.raises(ConfigError, match="bytes:fraction"):
            self.parser.parse_string(MINIMAL + "[link.device-host]\nefficiency_anchors = 1024\n")

    def test_missing_run_section(self):
        with pytest.raises(ConfigError, match="Invalid config"):
            self.parser.parse_string("[device]\ncapacity_tokens = 10\n")

    def test_unsupported_version(self):
        with pytest.raises(ConfigError, match="unsupported config_version 2"):
            self.parser.parse_string("[run]\nconfig_version = 2\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="Invalid config"):
            self.parser.parse_string(MINIMAL + "[tuning]\nfoo = 1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Invalid config"):
            self.parser.parse_string(MINIMAL + "[scheduler]\nthreshold = 1\n")

    def test_capacity_given_twice(self):
        with pytest.raises(ConfigError, match="not both"):
            self.parser.parse_string(MINIMAL + "[device]\ncapacity_bytes = 10\ncapacity_tokens = 10\n")

    def test_invalid_scheduler_value(self):
        with pytest.raises(ConfigError, match="deferral_threshold must be positive"):
            self.parser.parse_string(MINIMAL + "[scheduler]\ndeferral_threshold = 0\n")

    def test_unknown_profile(self):
        with pytest.raises(ConfigError, match="Unknown hardware profile"):
            self.parser.parse_string(MINIMAL + "profile = tpu\n")

    def test_malformed_file(self):
        with pytest.raises(ConfigError, match="Malformed config file"):
            self.parser.parse_string("no sections here\n")

    def test_parse_missing_file(self):
        with pytest.raises(FileNotFoundError, match="Config file not found"):
            self.parser.parse_file("nonexistent.ini")


class TestDefaultRunConfig:
    """Test cases for default_run_config."""

    def test_default_run_config(self):
        run_config = default_run_config("h200-pcie5", backend="dma", seed=5)

        assert run_config.seed == 5
        assert run_config.engine.seed == 5
        assert run_config.workload is None
        assert isinstance(run_config.engine.backend, DmaCopyBackend)
        assert run_config.engine.tier_spec(TierId.DISK) is not None
        assert run_config.engine.tier_spec(TierId.HOST).layout == Layout.LAYER_FIRST
