"""Turn clip payloads into the fixed-scale arrays the encoders consume."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .geometry import (
    POINT3D,
    PROJECTION2D,
    REPR_DIMS,
    VELOCITY2D,
    VELOCITY3D,
    CameraModel,
    GazeWindow,
    decimation_indices,
    differentiate,
    project_window,
    resample,
)

# brings typical magnitudes near unit scale; stored in the model config
GAZE_SCALES = {POINT3D: 1.0, VELOCITY3D: 1.0, PROJECTION2D: 1.0 / 200.0, VELOCITY2D: 1.0 / 2000.0}
IMU_SCALE = 0.5
RGB_OFFSET = 0.5


def gaze_representation(w: GazeWindow, representation: str, cam: CameraModel = CameraModel()) -> GazeWindow:
    """Convert a point3d window to ``representation``; other inputs must already match it."""
    if w.representation == representation:
        return w
    if w.representation != POINT3D:
        raise ConfigError(f"cannot derive {representation} from {w.representation} gaze")
    if representation == VELOCITY3D:
        return differentiate(w)
    if representation == PROJECTION2D:
        return project_window(w, cam)
    if representation == VELOCITY2D:
        return differentiate(project_window(w, cam))
    raise ConfigError(f"unknown gaze representation {representation!r}")


def gaze_features(w: GazeWindow, representation: str, hz: float, scale: float, cam: CameraModel = CameraModel()) -> np.ndarray:
    """``[d, n]`` channels-first array: resample, convert, then scale."""
    w = gaze_representation(resample(w, hz), representation, cam)
    x = w.samples
    if w.representation == PROJECTION2D:
        x = x - np.asarray(w.center)
    if x.shape[1] != REPR_DIMS[representation]:
        raise DimensionError(f"{representation} gaze needs {REPR_DIMS[representation]} channels, got {x.shape[1]}")
    return np.ascontiguousarray((x * scale).T)


def imu_features(samples: np.ndarray, source_hz: float, hz: float, scale: float = IMU_SCALE) -> np.ndarray:
    if samples.ndim != 2 or samples.shape[1] != 6:
        raise DimensionError(f"IMU window must be [n, 6], got {samples.shape}")
    idx = decimation_indices(samples.shape[0], source_hz, hz)
    return np.ascontiguousarray((samples[idx] * scale).T)


def rgb_features(patch: np.ndarray) -> np.ndarray:
    """uint8 ``[h, w, c]`` to float ``[c, h, w]`` centred on zero."""
    if patch.ndim != 3:
        raise DimensionError(f"RGB patch must be [h, w, c], got {patch.shape}")
    return np.ascontiguousarray(patch.transpose(2, 0, 1), dtype=np.float64) / 255.0 - RGB_OFFSET
