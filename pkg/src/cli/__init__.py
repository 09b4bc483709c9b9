"""
Command Line Interface for the KV-tier simulator.

This package contains the CLI components: argument parsing and the entry point.
"""

from .main import main
from .argument_parser import parse_arguments

__all__ = ["main", "parse_arguments"]
