"""
Unit tests for the KV-tier simulator.

This package contains unit tests for individual components.
"""
