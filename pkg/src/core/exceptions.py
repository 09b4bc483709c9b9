"""
Exception hierarchy for the KV-tier simulator.

Every error raised by the simulator derives from KvTierError so callers can
catch the whole family at one point (the CLI maps them onto exit codes).
"""

from typing import Optional


class KvTierError(Exception):
    """Base class for all simulator errors."""
    pass


class InvariantViolationError(KvTierError):
    """An internal accounting invariant was about to be broken."""
    pass


class TransientStateError(KvTierError):
    """A transient node was asked to make an illegal state transition."""

    def __init__(self, node: str, expected: str, actual: Optional[str]):
        self.node = node
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Transient node {node} expected mark {expected}, found {actual or 'committed'}"
        )


class CapacityError(KvTierError):
    """A tier cannot hold the requested pages."""

    def __init__(self, tier, shortfall: int):
        self.tier = tier
        self.shortfall = shortfall
        super().__init__(f"Tier {tier.name} short by {shortfall} bytes")


class PressureError(KvTierError):
    """Eviction cannot free enough bytes at a tier."""

    def __init__(self, tier, shortfall: int):
        self.tier = tier
        self.shortfall = shortfall
        super().__init__(f"Cannot evict enough from {tier.name}: short by {shortfall} bytes")


class GranularityError(KvTierError):
    """Transfer chunk smaller than the backend can move."""
    pass


class TraceParseError(KvTierError):
    """A trace line could not be parsed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"Line {line_number}: {message}")


class TraceValidationError(KvTierError):
    """A trace parsed but its records are inconsistent."""
    pass


class UnsupportedPatternError(KvTierError):
    """Cache-distance pattern requested on a trace that cannot be reordered."""
    pass


class EmptyReportError(KvTierError):
    """Aggregation was asked to summarize a run without finished requests."""
    pass


class ConfigError(KvTierError):
    """The run configuration is invalid."""
    pass


class FatalSimulationError(KvTierError):
    """The simulation cannot make progress with the given configuration."""
    pass
