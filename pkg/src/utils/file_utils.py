"""
File utility functions for the KV-tier simulator.

Reports must be byte-stable across runs, so every writer here fixes key order,
float formatting and line endings.
"""

import json
import math
import os
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

FLOAT_FORMAT = "%.9g"


def stable_float(value: float) -> float:
    """Round a float to 9 significant digits."""
    if value == 0 or math.isnan(value) or math.isinf(value):
        return value
    return float(FLOAT_FORMAT % value)


def _stabilize(value: Any) -> Any:
    if isinstance(value, float):
        return stable_float(value)
    if isinstance(value, dict):
        return {str(key): _stabilize(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_stabilize(item) for item in value]
    return value


def write_json(data: Dict[str, Any], file_path: str) -> None:
    """Write a JSON document with sorted keys and 9-significant-digit floats."""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(file_path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(_stabilize(data), handle, sort_keys=True, indent=2)
        handle.write("\n")


def write_jsonl(records: Iterable[Dict[str, Any]], file_path: str) -> int:
    """
    Write one JSON object per line.

    Returns:
        Number of records written
    """
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    count = 0
    with open(file_path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(_stabilize(record), sort_keys=True) + "\n")
            count += 1
    return count


def write_csv_data(rows: List[Dict[str, Any]], file_path: str, headers: Optional[List[str]] = None) -> None:
    """
    Write rows to a CSV file with a fixed column order and float format.

    Args:
        rows: Row dictionaries
        file_path: Path to the output CSV file
        headers: Column order; defaults to the keys of the first row
    """
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame = pd.DataFrame(rows, columns=headers)
    frame.to_csv(file_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_csv_data(file_path: str) -> pd.DataFrame:
    """Read a CSV written by write_csv_data."""
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"CSV file not found: {file_path}")
    return pd.read_csv(file_path)
