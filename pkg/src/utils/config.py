"""
Process-level configuration for the KV-tier simulator.

This module provides the environment-driven settings shared by the CLI and the
services: log level, default output directory, default hardware profile and
seed.
"""

import os
from dataclasses import dataclass


@dataclass
class Config:
    """
    Configuration settings read from the environment.

    Attributes:
        log_level: Logging level name; "debug" enables per-event tracing
        output_directory: Default directory for run artifacts
        profile: Default hardware profile
        seed: Default seed shared by workload generation and the engine
        log_file: File handler target, empty to log to stdout only
    """

    log_level: str = "info"
    output_directory: str = "output/"
    profile: str = "h200-pcie5"
    seed: int = 0
    log_file: str = "kvtier_sim.log"

    @classmethod
    def from_env(cls) -> "Config":
        """Create configuration from environment variables."""
        return cls(
            log_level=os.getenv("KVTIER_LOG", "info"),
            output_directory=os.getenv("KVTIER_OUTPUT_DIR", "output/"),
            profile=os.getenv("KVTIER_PROFILE", "h200-pcie5"),
            seed=int(os.getenv("KVTIER_SEED", "0")),
            log_file=os.getenv("KVTIER_LOG_FILE", "kvtier_sim.log"),
        )


# Global configuration instance
config = Config.from_env()
