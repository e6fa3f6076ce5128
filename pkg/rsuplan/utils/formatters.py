"""
Utility functions for formatting planning metrics.
"""

from typing import Optional


def format_dbm(value: Optional[float]) -> str:
    """
    Format a signal level in dBm.

    Args:
        value: Level in dBm, None when undefined

    Returns:
        e.g. "-84.20 dBm", or "n/a"
    """
    if value is None:
        return "n/a"
    return f"{value:.2f} dBm"


def format_percentage(value: Optional[float]) -> str:
    """
    Format value as percentage string.

    Args:
        value: Value to format (e.g., 0.15 for 15%)

    Returns:
        Formatted percentage string
    """
    if value is None:
        return "n/a"
    return f"{value * 100:.2f}%"


def format_meters(value: float) -> str:
    """Lengths below 1 km in meters, otherwise in kilometers."""
    if abs(value) < 1000:
        return f"{value:.1f} m"
    return f"{value / 1000:.2f} km"


def format_threshold(value: Optional[float]) -> str:
    """RSS threshold as shown in tables; None means the constraint is off."""
    return "disabled" if value is None else f"{value:g} dBm"
