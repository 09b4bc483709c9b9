"""
kvtier-sim - trace-driven simulator of a hierarchical KV-cache serving engine.

This package models prefix caching over device, host and disk memory tiers,
cache-aware prefill scheduling and the transfer costs between tiers.
"""

__version__ = "0.1.0"
