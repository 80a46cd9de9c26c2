"""Detector feature sets.

``raw`` is the 12 schema columns. ``physics`` appends two residuals of
identities every generated record satisfies exactly, which feature-space
perturbations break:

- power_residual: 10*log10(power) + pathloss + 30, the transmit power in dBm;
- toa_excess: c * time_of_arrival - distance, zero on LoS and positive otherwise.
"""

import numpy as np

from ..dataset import FEATURES
from ..errors import ConfigError

C = 299_792_458.0
FEATURE_SETS = ("raw", "physics")
_POWER = FEATURES.index("power")
_PL = FEATURES.index("pathloss")
_TOA = FEATURES.index("time_of_arrival")
_DIST = FEATURES.index("distance")
POWER_FLOOR = 1e-300  # perturbed power can go non-positive


def feature_names(kind="physics"):
    if kind == "raw":
        return list(FEATURES)
    if kind == "physics":
        return list(FEATURES) + ["power_residual", "toa_excess"]
    raise ConfigError(f"unknown detector feature set: {kind}")


def detector_features(data, kind="physics"):
    """Feature matrix for the detector from an ``(N, 12)`` record array."""
    data = np.asarray(data, dtype=np.float64)
    if kind == "raw":
        return data
    if kind != "physics":
        raise ConfigError(f"unknown detector feature set: {kind}")
    power_residual = 10.0 * np.log10(np.maximum(data[:, _POWER], POWER_FLOOR)) + data[:, _PL] + 30.0
    toa_excess = C * data[:, _TOA] - data[:, _DIST]
    return np.column_stack([data, power_residual, toa_excess])
