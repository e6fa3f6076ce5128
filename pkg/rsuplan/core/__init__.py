"""
Geometry, radio, coverage and solver functionality.
"""
