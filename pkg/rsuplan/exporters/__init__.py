"""
Export functionality for plans (GeoJSON, CSV, JSON summaries).
"""
