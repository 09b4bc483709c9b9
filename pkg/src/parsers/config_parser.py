"""
Run configuration parser for the KV-tier simulator.

This module reads the INI run configuration file, validates every section
against a pydantic schema and builds the EngineConfig and WorkloadSpec the
services consume. Values left out of the file come from the named hardware
and workload profiles.

Format (version 1)::

    [run]
    config_version = 1
    profile = h200-pcie5
    seed = 0

    [geometry]
    page_size_tokens = 32

    [device]
    capacity_tokens = 200000

    [link.device-host]
    peak_bandwidth = 64e9
    efficiency_anchors = 131072:0.22, 1048576:0.75, 2097152:0.80

    [backend]
    kind = gpu

    [workload]
    profile = loogle
    rate = 2.0
"""

import configparser
import logging
import os
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.exceptions import ConfigError
from ..core.sim_config import (
    ComputeModel,
    EngineConfig,
    LengthDistribution,
    Pattern,
    SchedulerConfig,
    WorkloadSpec,
    link_key,
)
from ..core.tier import KvGeometry, Layout, TierId, TierSpec
from ..core.transfer import IoBackendSpec, LinkSpec, OracleBackend
from ..utils.config import config
from ..utils.profiles import HardwareProfile, hardware_profile, workload_profile

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def overrides(self) -> Dict[str, Any]:
        """Fields set in the file."""
        return {name: getattr(self, name) for name in self.model_fields_set}


class RunSection(_Section):
    config_version: int
    profile: Optional[str] = None
    seed: int = Field(default=0, ge=0)
    warmup_requests: int = Field(default=0, ge=0)

    @field_validator("config_version")
    @classmethod
    def supported_version(cls, value: int) -> int:
        if value != CONFIG_VERSION:
            raise ValueError(f"unsupported config_version {value} (expected {CONFIG_VERSION})")
        return value


class GeometrySection(_Section):
    num_layers: Optional[int] = Field(default=None, ge=1)
    kv_bytes_per_token_per_layer: Optional[int] = Field(default=None, ge=1)
    page_size_tokens: Optional[int] = Field(default=None, ge=1)


class TierSection(_Section):
    capacity_bytes: Optional[int] = Field(default=None, gt=0)
    capacity_tokens: Optional[int] = Field(default=None, gt=0)
    layout: Optional[Layout] = None

    @field_validator("layout", mode="before")
    @classmethod
    def parse_layout(cls, value: Any) -> Any:
        return Layout.parse(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def one_capacity(self) -> "TierSection":
        if self.capacity_bytes is not None and self.capacity_tokens is not None:
            raise ValueError("give capacity_bytes or capacity_tokens, not both")
        return self

    def capacity(self, bytes_per_token: int) -> Optional[int]:
        if self.capacity_tokens is not None:
            return self.capacity_tokens * bytes_per_token
        return self.capacity_bytes


class LinkSection(_Section):
    peak_bandwidth: Optional[float] = Field(default=None, gt=0)
    efficiency_anchors: Optional[Tuple[Tuple[int, float], ...]] = None

    @field_validator("efficiency_anchors", mode="before")
    @classmethod
    def parse_anchors(cls, value: Any) -> Any:
        if not isinstance(value, str):
            return value
        anchors = []
        for item in value.split(","):
            size, _, fraction = item.strip().partition(":")
            if not fraction:
                raise ValueError(f"anchor {item.strip()!r} is not bytes:fraction")
            anchors.append((int(float(size)), float(fraction)))
        return tuple(anchors)

    def apply(self, link: LinkSpec) -> LinkSpec:
        return LinkSpec(
            peak_bandwidth=self.peak_bandwidth or link.peak_bandwidth,
            efficiency_anchors=self.efficiency_anchors or link.efficiency_anchors,
        )


DMA_FIELDS = {"per_op_latency", "max_concurrency"}
GPU_FIELDS = {"blocks", "per_block_bandwidth", "min_granularity", "prefill_slowdown", "decode_slowdown"}


class BackendSection(_Section):
    kind: str = "gpu"
    per_op_latency: Optional[float] = None
    max_concurrency: Optional[int] = None
    blocks: Optional[int] = None
    per_block_bandwidth: Optional[float] = None
    min_granularity: Optional[int] = None
    prefill_slowdown: Optional[float] = None
    decode_slowdown: Optional[float] = None

    @field_validator("kind")
    @classmethod
    def known_kind(cls, value: str) -> str:
        value = value.strip().lower()
        if value not in ("dma", "gpu", "oracle"):
            raise ValueError(f"backend kind must be dma, gpu or oracle, got {value!r}")
        return value

    @model_validator(mode="after")
    def fields_match_kind(self) -> "BackendSection":
        allowed = {"dma": DMA_FIELDS, "gpu": GPU_FIELDS, "oracle": set()}[self.kind]
        stray = sorted(self.model_fields_set - allowed - {"kind"})
        if stray:
            raise ValueError(f"{', '.join(stray)} not valid for backend kind {self.kind}")
        return self


class DiskBackendSection(_Section):
    per_op_latency: Optional[float] = None
    max_concurrency: Optional[int] = None


class ComputeSection(_Section):
    prefill_token_cost: Optional[float] = None
    prefill_attn_cost: Optional[float] = None
    decode_step_base: Optional[float] = None
    decode_step_per_token: Optional[float] = None


class SchedulerSection(_Section):
    deferral_threshold: Optional[int] = None
    loading_bound_ratio: Optional[float] = None
    max_batch_tokens: Optional[int] = None
    bubble_fill_enabled: Optional[bool] = None
    deferral_enabled: Optional[bool] = None
    balanced_batching_enabled: Optional[bool] = None
    dedup_enabled: Optional[bool] = None


class EngineSection(_Section):
    max_inflight: Optional[int] = None
    bubble_contention: Optional[float] = None
    prefetch_enabled: Optional[bool] = None
    backup_enabled: Optional[bool] = None


DISTRIBUTION_FIELDS = ("queries_per_context", "context_len", "query_len", "output_len")


class WorkloadSection(_Section):
    profile: Optional[str] = None
    num_contexts: Optional[int] = None
    queries_per_context: Optional[float] = Field(default=None, gt=0)
    context_len: Optional[float] = Field(default=None, ge=0)
    query_len: Optional[float] = Field(default=None, ge=0)
    output_len: Optional[float] = Field(default=None, gt=0)
    spread: Optional[float] = None
    rate: Optional[float] = None
    pattern: Optional[Pattern] = None
    thinking_time: Optional[float] = None
    multi_turn: Optional[bool] = None
    max_inflight: Optional[int] = None

    @field_validator("pattern", mode="before")
    @classmethod
    def parse_pattern(cls, value: Any) -> Any:
        return Pattern.parse(value) if isinstance(value, str) else value


class RunConfigModel(_Section):
    """Schema of a whole run configuration file."""

    run: RunSection
    geometry: GeometrySection = GeometrySection()
    device: TierSection = TierSection()
    host: TierSection = TierSection()
    disk: Optional[TierSection] = None
    link_device_host: LinkSection = Field(default=LinkSection(), alias="link.device-host")
    link_host_disk: LinkSection = Field(default=LinkSection(), alias="link.host-disk")
    backend: BackendSection = BackendSection()
    disk_backend: DiskBackendSection = DiskBackendSection()
    compute: ComputeSection = ComputeSection()
    scheduler: SchedulerSection = SchedulerSection()
    engine: EngineSection = EngineSection()
    workload: Optional[WorkloadSection] = None


@dataclass(frozen=True)
class RunConfig:
    """
    A parsed run configuration.

    Attributes:
        engine: Engine configuration
        workload: Workload to generate, None when the run replays a trace
        seed: Seed shared by workload generation and the engine
    """

    engine: EngineConfig
    workload: Optional[WorkloadSpec]
    seed: int


class ConfigParser:
    """
    Parser for run configuration files.
    """

    def parse_file(self, file_path: str, profile: Optional[str] = None) -> RunConfig:
        """
        Parse a run configuration file.

        Args:
            file_path: Path to the INI file
            profile: Hardware profile overriding [run] profile

        Returns:
            The validated RunConfig

        Raises:
            FileNotFoundError: If the file does not exist
            ConfigError: If the file is malformed or fails validation
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Config file not found: {file_path}")
        with open(file_path, "r", encoding="utf-8") as handle:
            run_config = self.parse_string(handle.read(), profile)
        logger.info("Loaded run configuration %s (profile %s)", file_path, run_config.engine.profile)
        return run_config

    def parse_string(self, text: str, profile: Optional[str] = None) -> RunConfig:
        reader = configparser.ConfigParser(interpolation=None)
        try:
            reader.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"Malformed config file: {e}")
        sections = {name: dict(reader.items(name)) for name in reader.sections()}
        try:
            model = RunConfigModel.model_validate(sections)
        except ValidationError as e:
            raise ConfigError(f"Invalid config: {e}")
        try:
            return self.build(model, profile)
        except ValueError as e:
            raise ConfigError(f"Invalid config: {e}")

    def build(self, model: RunConfigModel, profile: Optional[str] = None) -> RunConfig:
        """Turn a validated model into the frozen configuration types."""
        machine = hardware_profile(profile or model.run.profile or config.profile)
        geometry = replace(KvGeometry(), **model.geometry.overrides())
        seed = model.run.seed
        workload = self._workload(model.workload, seed)

        backend = self._backend(model.backend, machine)
        engine_fields: Dict[str, Any] = model.engine.overrides()
        if workload is not None and "max_inflight" not in engine_fields:
            engine_fields["max_inflight"] = workload.max_inflight

        engine = EngineConfig(
            compute=replace(ComputeModel(num_layers=geometry.num_layers), **model.compute.overrides()),
            geometry=geometry,
            tiers=self._tiers(model, machine, geometry.bytes_per_token, backend),
            links=self._links(model, machine),
            backend=backend,
            disk_backend=replace(machine.disk_backend, **model.disk_backend.overrides()),
            scheduler=replace(SchedulerConfig(), **model.scheduler.overrides()),
            seed=seed,
            warmup_requests=model.run.warmup_requests,
            profile=machine.name,
            **engine_fields,
        )
        return RunConfig(engine=engine, workload=workload, seed=seed)

    @staticmethod
    def _tiers(
        model: RunConfigModel, machine: HardwareProfile, bytes_per_token: int, backend: IoBackendSpec
    ) -> Tuple[TierSpec, ...]:
        host_layout, disk_layout = machine.layouts(backend)
        tiers = [
            TierSpec(
                TierId.DEVICE,
                model.device.capacity(bytes_per_token) or machine.device_capacity,
                model.device.layout or Layout.LAYER_FIRST,
            ),
            TierSpec(
                TierId.HOST,
                model.host.capacity(bytes_per_token) or machine.host_capacity,
                model.host.layout or host_layout,
            ),
        ]
        if model.disk is not None:
            capacity = model.disk.capacity(bytes_per_token) or machine.disk_capacity
            if not capacity:
                raise ValueError(f"profile {machine.name} has no disk; set [disk] capacity")
            tiers.append(TierSpec(TierId.DISK, capacity, model.disk.layout or disk_layout))
        return tuple(tiers)

    @staticmethod
    def _links(model: RunConfigModel, machine: HardwareProfile) -> Dict:
        links = {link_key(TierId.DEVICE, TierId.HOST): model.link_device_host.apply(machine.device_host_link)}
        if model.disk is not None:
            links[link_key(TierId.HOST, TierId.DISK)] = model.link_host_disk.apply(machine.host_disk_link)
        return links

    @staticmethod
    def _backend(section: BackendSection, machine: HardwareProfile) -> IoBackendSpec:
        fields = {name: value for name, value in section.overrides().items() if name != "kind"}
        if section.kind == "oracle":
            return OracleBackend()
        if section.kind == "dma":
            return replace(machine.dma, **fields) if fields else machine.dma
        return replace(machine.gpu, **fields) if fields else machine.gpu

    @staticmethod
    def _workload(section: Optional[WorkloadSection], seed: int) -> Optional[WorkloadSpec]:
        if section is None:
            return None
        values = section.overrides()
        values.pop("profile", None)
        spread = values.pop("spread", None)
        base = workload_profile(section.profile) if section.profile else WorkloadSpec()
        for name in DISTRIBUTION_FIELDS:
            current: LengthDistribution = getattr(base, name)
            mean = values.pop(name, current.mean)
            values[name] = LengthDistribution(mean, current.spread if spread is None else spread)
        return replace(base, seed=seed, **values)


def default_run_config(profile: str, backend: str = "gpu", seed: int = 0) -> RunConfig:
    """Run configuration of a bare hardware profile, for runs without a config file."""
    engine = replace(hardware_profile(profile).engine_config(backend=backend), seed=seed)
    return RunConfig(engine=engine, workload=None, seed=seed)

