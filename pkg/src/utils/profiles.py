"""
Built-in hardware and workload profiles.

Hardware profiles bundle tier capacities, link curves and transfer backend
parameters. Workload profiles set length means from public dataset statistics
with a uniform +/-20% spread; per-dataset distributions are approximations.

Published average input lengths count the whole prompt; context_len is that
average minus the query mean: loogle prompts average 21613 tokens, of
which 64 are the query and 21549 the shared context.
"""

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

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
from ..core.transfer import DmaCopyBackend, GpuAssistBackend, IoBackendSpec, LinkSpec, OracleBackend

PCIE5_LINK = LinkSpec(
    peak_bandwidth=64e9,
    efficiency_anchors=((131072, 0.22), (1048576, 0.75), (2097152, 0.80)),
)
NVME_LINK = LinkSpec(
    peak_bandwidth=7e9,
    efficiency_anchors=((131072, 0.25), (4194304, 0.9)),
)


@dataclass(frozen=True)
class HardwareProfile:
    """
    A named machine: tiers, links and transfer backends.

    Attributes:
        name: Profile name
        device_capacity: Device bytes available for KV cache
        host_capacity: Host bytes available for KV cache
        disk_capacity: Disk bytes, None for a two-tier machine
        host_layout: Layout of host memory
        disk_layout: Layout of the disk tier
        device_host_link: Device/Host link
        host_disk_link: Host/Disk link
        dma: Copy-engine backend parameters
        gpu: GPU-assisted backend parameters
        disk_backend: Backend used for Host/Disk transfers
    """

    name: str
    device_capacity: int
    host_capacity: int
    disk_capacity: Optional[int]
    host_layout: Layout
    disk_layout: Layout
    device_host_link: LinkSpec
    host_disk_link: LinkSpec
    dma: DmaCopyBackend = DmaCopyBackend()
    gpu: GpuAssistBackend = GpuAssistBackend()
    disk_backend: DmaCopyBackend = DmaCopyBackend(per_op_latency=100e-6, max_concurrency=64)

    def backend(self, kind: str) -> IoBackendSpec:
        """Backend by name: dma, gpu or oracle."""
        kinds = {"dma": self.dma, "gpu": self.gpu, "oracle": OracleBackend()}
        try:
            return kinds[kind.strip().lower()]
        except KeyError:
            raise ValueError(f"Unknown backend kind: {kind}")

    def layouts(self, backend: IoBackendSpec) -> Tuple[Layout, Layout]:
        """
        Host and disk layouts paired with a backend.

        Copy-engine backends get layer-first host and disk memory; other
        backends keep the profile layouts.
        """
        if isinstance(backend, DmaCopyBackend):
            return Layout.LAYER_FIRST, Layout.LAYER_FIRST
        return self.host_layout, self.disk_layout

    def with_backend(self, engine: EngineConfig, backend: IoBackendSpec) -> EngineConfig:
        """Engine configuration switched to backend, host and disk relaid out to match."""
        host_layout, disk_layout = self.layouts(backend)
        layouts = {TierId.HOST: host_layout, TierId.DISK: disk_layout}
        tiers = tuple(
            replace(spec, layout=layouts[spec.tier]) if spec.tier in layouts else spec for spec in engine.tiers
        )
        return replace(engine, backend=backend, tiers=tiers)

    def engine_config(
        self,
        backend: str = "gpu",
        geometry: Optional[KvGeometry] = None,
        scheduler: Optional[SchedulerConfig] = None,
        with_disk: bool = True,
        **overrides,
    ) -> EngineConfig:
        """Build an EngineConfig for this machine; keyword overrides replace fields."""
        geometry = geometry or KvGeometry()
        io_backend = self.backend(backend)
        host_layout, disk_layout = self.layouts(io_backend)
        tiers = [
            TierSpec(TierId.DEVICE, self.device_capacity, Layout.LAYER_FIRST),
            TierSpec(TierId.HOST, self.host_capacity, host_layout),
        ]
        links = {link_key(TierId.DEVICE, TierId.HOST): self.device_host_link}
        if with_disk and self.disk_capacity:
            tiers.append(TierSpec(TierId.DISK, self.disk_capacity, disk_layout))
            links[link_key(TierId.HOST, TierId.DISK)] = self.host_disk_link
        built = EngineConfig(
            compute=ComputeModel(num_layers=geometry.num_layers),
            geometry=geometry,
            tiers=tuple(tiers),
            links=links,
            backend=io_backend,
            disk_backend=self.disk_backend,
            scheduler=scheduler or SchedulerConfig(),
            profile=self.name,
        )
        return replace(built, **overrides) if overrides else built


H200_PCIE5 = HardwareProfile(
    name="h200-pcie5",
    device_capacity=40 * 10**9,
    host_capacity=400 * 10**9,
    disk_capacity=4 * 10**12,
    host_layout=Layout.PAGE_FIRST,
    disk_layout=Layout.PAGE_FIRST,
    device_host_link=PCIE5_LINK,
    host_disk_link=NVME_LINK,
)

GH200_NVLINK = replace(
    H200_PCIE5,
    name="gh200-nvlink",
    host_capacity=480 * 10**9,
    device_host_link=PCIE5_LINK.scaled(6.0),
)

HARDWARE_PROFILES: Dict[str, HardwareProfile] = {
    profile.name: profile for profile in (H200_PCIE5, GH200_NVLINK)
}


def hardware_profile(name: str) -> HardwareProfile:
    try:
        return HARDWARE_PROFILES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"Unknown hardware profile: {name} (known: {', '.join(sorted(HARDWARE_PROFILES))})")


WORKLOAD_PROFILES: Dict[str, WorkloadSpec] = {
    "loogle": WorkloadSpec(
        num_contexts=105,
        queries_per_context=LengthDistribution(2410 / 105),
        context_len=LengthDistribution(21549.0),
        query_len=LengthDistribution(64.0),
        output_len=LengthDistribution(15.6),
        rate=1.0,
        pattern=Pattern.SHUFFLE,
    ),
    "narrativeqa": WorkloadSpec(
        num_contexts=50,
        queries_per_context=LengthDistribution(20.0),
        context_len=LengthDistribution(54733.0),
        query_len=LengthDistribution(64.0),
        output_len=LengthDistribution(13.0),
        rate=0.5,
        pattern=Pattern.SHUFFLE,
    ),
    "reviewmt": WorkloadSpec(
        num_contexts=100,
        queries_per_context=LengthDistribution(5.0),
        context_len=LengthDistribution(16000.0),
        query_len=LengthDistribution(300.0),
        output_len=LengthDistribution(208.3),
        rate=1.0,
        thinking_time=60.0,
        multi_turn=True,
    ),
    "sharegpt-like": WorkloadSpec(
        num_contexts=100,
        queries_per_context=LengthDistribution(4.0),
        context_len=LengthDistribution(400.0),
        query_len=LengthDistribution(100.0),
        output_len=LengthDistribution(260.9),
        rate=2.0,
        thinking_time=60.0,
        multi_turn=True,
    ),
}


def workload_profile(name: str, **overrides) -> WorkloadSpec:
    """Named workload profile with field overrides applied."""
    try:
        spec = WORKLOAD_PROFILES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"Unknown workload profile: {name} (known: {', '.join(sorted(WORKLOAD_PROFILES))})")
    return replace(spec, **overrides) if overrides else spec
