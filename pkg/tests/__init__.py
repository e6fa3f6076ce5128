"""
Tests for rsuplan.
"""
