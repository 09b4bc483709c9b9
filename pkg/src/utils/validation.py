"""
Validation utilities for the KV-tier simulator.

This module provides validation functions for command-line input: file and
directory paths, sweep lists, pattern and profile names.
"""

import os
from typing import List, Sequence

from ..core.sim_config import Pattern
from .profiles import HARDWARE_PROFILES, WORKLOAD_PROFILES

BACKEND_KINDS = ("dma", "gpu", "oracle")


def validate_file_path(file_path: str, must_exist: bool = True) -> bool:
    """
    Validate a file path.

    Args:
        file_path: Path to validate
        must_exist: Whether the file must exist

    Returns:
        True if path is valid
    """
    if not file_path or not isinstance(file_path, str):
        return False

    if must_exist and not os.path.isfile(file_path):
        return False

    return True


def validate_output_directory(output_dir: str) -> str:
    """
    Validate and normalize output directory path, creating it if needed.

    Raises:
        ValueError: If output directory is invalid
    """
    if not output_dir:
        raise ValueError("Output directory cannot be empty")
    output_dir = os.path.normpath(output_dir)
    if os.path.exists(output_dir) and not os.path.isdir(output_dir):
        raise ValueError(f"Output path exists and is not a directory: {output_dir}")
    os.makedirs(output_dir, exist_ok=True)
    return output_dir


def _split(values: str) -> List[str]:
    return [item.strip() for item in values.split(",") if item.strip()]


def validate_int_list(values: str, name: str = "values") -> List[int]:
    """
    Parse a comma-separated list of positive integers.

    Raises:
        ValueError: If the list is empty or holds a non-positive or non-integer item
    """
    items = _split(values)
    if not items:
        raise ValueError(f"{name} must list at least one value")
    parsed = []
    for item in items:
        try:
            number = int(item)
        except ValueError:
            raise ValueError(f"{name}: {item!r} is not an integer")
        if number < 1:
            raise ValueError(f"{name}: {number} must be positive")
        parsed.append(number)
    return parsed


def validate_float_list(values: str, name: str = "values") -> List[float]:
    """Parse a comma-separated list of positive numbers."""
    items = _split(values)
    if not items:
        raise ValueError(f"{name} must list at least one value")
    parsed = []
    for item in items:
        try:
            number = float(item)
        except ValueError:
            raise ValueError(f"{name}: {item!r} is not a number")
        if number <= 0:
            raise ValueError(f"{name}: {number} must be positive")
        parsed.append(number)
    return parsed


def validate_choices(values: str, allowed: Sequence[str], name: str) -> List[str]:
    """Parse a comma-separated list whose items must all be in allowed."""
    items = [item.lower() for item in _split(values)]
    if not items:
        raise ValueError(f"{name} must list at least one value")
    invalid = [item for item in items if item not in allowed]
    if invalid:
        raise ValueError(f"Invalid {name}: {invalid} (choose from {', '.join(allowed)})")
    return items


def validate_patterns(values: str) -> List[Pattern]:
    """Parse a comma-separated list of cache-distance patterns."""
    items = _split(values)
    if not items:
        raise ValueError("patterns must list at least one value")
    return [Pattern.parse(item) for item in items]


def validate_profile(name: str) -> str:
    if name.strip().lower() not in HARDWARE_PROFILES:
        raise ValueError(f"Unknown hardware profile: {name} (choose from {', '.join(sorted(HARDWARE_PROFILES))})")
    return name.strip().lower()


def validate_workload_profile(name: str) -> str:
    if name.strip().lower() not in WORKLOAD_PROFILES:
        raise ValueError(f"Unknown workload profile: {name} (choose from {', '.join(sorted(WORKLOAD_PROFILES))})")
    return name.strip().lower()


def validate_seed(seed: int) -> int:
    if seed < 0:
        raise ValueError("Seed must be non-negative")
    return seed
