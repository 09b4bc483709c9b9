"""
Parsers for the KV-tier simulator.

This package contains readers for workload traces and run configuration files.
"""

from .trace_parser import TraceParser
from .config_parser import ConfigParser, RunConfig

__all__ = ["TraceParser", "ConfigParser", "RunConfig"]
