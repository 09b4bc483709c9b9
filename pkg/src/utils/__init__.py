"""
Utility functions for the KV-tier simulator.

This package contains utility functions for configuration, file operations,
validation and the built-in profiles.
"""

from .config import Config
from .file_utils import *
from .validation import *

__all__ = ["Config"]
