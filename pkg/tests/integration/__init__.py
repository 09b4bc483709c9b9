"""
Integration tests for the KV-tier simulator.
"""
