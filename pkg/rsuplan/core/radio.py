"""
60 GHz LOS channel model: path loss, channel attenuation and received signal strength.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Union

import numpy as np

from rsuplan.core.exceptions import InvalidDistanceError, InvalidParameterError

Distance = Union[float, np.ndarray]

# Distances below this are clamped to keep log10 finite
MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class RadioParams:
    """Transmitter and propagation constants; defaults are the 60 GHz urban values."""

    tx_power_dbm: float = 10.0
    tx_gain_dbi: float = 15.0
    path_loss_exponent: float = 2.66
    channel_att_factor_db: float = 70.0
    # Rain plus oxygen absorption slope, dB per kilometer
    att_per_km_db: float = 40.0

    def __post_init__(self) -> None:
        if self.path_loss_exponent <= 0:
            raise InvalidParameterError(
                "path_loss_exponent", self.path_loss_exponent, "must be positive"
            )
        if self.att_per_km_db < 0:
            raise InvalidParameterError("att_per_km_db", self.att_per_km_db, "must be >= 0")

    @property
    def eirp_dbm(self) -> float:
        """P_tx + G_tx."""
        return self.tx_power_dbm + self.tx_gain_dbi

    def to_dict(self) -> Dict[str, Any]:
        """Plain-data view."""
        return asdict(self)


def _check_distance(d: Distance) -> np.ndarray:
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        bad = float(arr.min()) if arr.ndim else float(arr)
        raise InvalidDistanceError(bad)
    return arr


def path_loss_db(params: RadioParams, d: Distance) -> Distance:
    """
    LOS path loss 10·α·log10(d) + slope·d_km + H_att.

    Args:
        params: Radio parameters
        d: Distance(s) in meters; values under 1 m are clamped to 1 m

    Returns:
        Path loss in dB (float for scalar input, array otherwise)

    Raises:
        InvalidDistanceError: If any distance is negative
    """
    arr = _check_distance(d)
    # Only the log term is clamped; attenuation uses the true distance
    d_m = np.maximum(arr, MIN_DISTANCE_M)
    loss = (
        10.0 * params.path_loss_exponent * np.log10(d_m)
        + params.att_per_km_db * arr / 1000.0
        + params.channel_att_factor_db
    )
    if loss.ndim == 0:
        return float(loss)
    return loss


def rss_dbm(params: RadioParams, d: Distance) -> Distance:
    """
    Received signal strength P_tx + G_tx − L_LOS(d), no receive gain.

    Args:
        params: Radio parameters
        d: Distance(s) in meters

    Returns:
        RSS in dBm (float for scalar input, array otherwise)
    """
    return params.eirp_dbm - path_loss_db(params, d)
