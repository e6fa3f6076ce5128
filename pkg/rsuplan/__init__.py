"""
rsuplan - mmWave road-side unit deployment planning.
"""

__version__ = "0.1.0"
__author__ = "Manuel Rodriguez"
__description__ = "Minimal LOS- and RSS-constrained RSU deployments for city maps"
