"""
Test suite for the KV-tier simulator.
"""
