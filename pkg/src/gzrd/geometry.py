"""Gaze geometry: eye rays, 3D gaze points, pinhole projection and window transforms.

Coordinates are in the head-mounted device frame: x to the right, y down,
z forward along the RGB camera's optical axis.  Pixel coordinates put the
principal point at the image centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BehindCameraError, ConfigError, DataError
from .rng import stream

IPD_M = 0.063
FALLBACK_DEPTH_M = 1.0
PARALLEL_SIN = 1e-6

POINT3D = "point3d"
VELOCITY3D = "velocity3d"
PROJECTION2D = "projection2d"
VELOCITY2D = "velocity2d"
REPR_DIMS = {POINT3D: 3, VELOCITY3D: 3, PROJECTION2D: 2, VELOCITY2D: 2}
SUPPORTED_HZ = (6, 10, 15, 20, 30, 60)


@dataclass(frozen=True)
class CameraModel:
    width: int = 1408
    height: int = 1408
    fov_deg: float = 110.0

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"field of view must lie in (0, 180), got {self.fov_deg}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("image size must be positive")

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def center(self) -> tuple[float, float]:
        return self.width / 2.0, self.height / 2.0


@dataclass(frozen=True)
class EyeRayPair:
    timestamp: float
    left_origin: np.ndarray
    left_dir: np.ndarray
    right_origin: np.ndarray
    right_dir: np.ndarray

    @classmethod
    def from_angles(cls, timestamp, left_yaw, left_pitch, right_yaw, right_pitch, baseline=IPD_M):
        return cls(
            timestamp,
            np.array([-baseline / 2.0, 0.0, 0.0]),
            direction_from_angles(left_yaw, left_pitch),
            np.array([baseline / 2.0, 0.0, 0.0]),
            direction_from_angles(right_yaw, right_pitch),
        )

    def swapped(self) -> "EyeRayPair":
        return EyeRayPair(self.timestamp, self.right_origin, self.right_dir, self.left_origin, self.left_dir)


@dataclass
class GazeWindow:
    """``samples`` is ``[n, d]`` with ``n == round(hz * duration)``.

    ``center`` is the pivot for rotations and flips; it is the principal
    point for pixel-space projections and the origin otherwise.
    """

    samples: np.ndarray
    hz: float
    duration: float
    representation: str = POINT3D
    center: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.representation not in REPR_DIMS:
            raise ConfigError(f"unknown gaze representation {self.representation!r}")
        d = REPR_DIMS[self.representation]
        if self.samples.ndim != 2 or self.samples.shape[1] != d:
            raise DataError(f"{self.representation} gaze needs [n, {d}] samples, got {self.samples.shape}")
        expected = int(round(self.hz * self.duration))
        if self.samples.shape[0] != expected:
            raise DataError(
                f"gaze window has {self.samples.shape[0]} samples, expected round({self.hz}*{self.duration})={expected}"
            )

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]


def direction_from_angles(yaw, pitch) -> np.ndarray:
    """Unit gaze direction; positive yaw looks right, positive pitch looks down."""
    yaw, pitch = np.asarray(yaw, dtype=np.float64), np.asarray(pitch, dtype=np.float64)
    return np.stack(
        [np.sin(yaw) * np.cos(pitch), np.sin(pitch), np.cos(yaw) * np.cos(pitch)], axis=-1
    )


def angles_to_point(point, origin) -> tuple[float, float]:
    """Yaw and pitch of the ray from ``origin`` through ``point``."""
    v = np.asarray(point, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return np.arctan2(v[..., 0], v[..., 2]), np.arcsin(np.clip(v[..., 1], -1.0, 1.0))


def intersect_rays(pair: EyeRayPair, fallback_depth: float = FALLBACK_DEPTH_M):
    """Midpoint of the shortest segment between the two eye rays.

    Returns ``(point, degenerate)``.  Near-parallel rays (sine of the
    angle between them below 1e-6) give the point at ``fallback_depth``
    along the mean direction from the midpoint of the eyes.
    """
    o1, d1 = np.asarray(pair.left_origin, float), np.asarray(pair.left_dir, float)
    o2, d2 = np.asarray(pair.right_origin, float), np.asarray(pair.right_dir, float)
    points, degenerate = _closest_midpoints(o1[None], d1[None], o2[None], d2[None], fallback_depth)
    return points[0], bool(degenerate[0])


def intersect_ray_arrays(o1, d1, o2, d2, fallback_depth: float = FALLBACK_DEPTH_M):
    """Vectorised :func:`intersect_rays` over ``[n, 3]`` arrays."""
    return _closest_midpoints(
        np.atleast_2d(o1).astype(float), np.atleast_2d(d1).astype(float),
        np.atleast_2d(o2).astype(float), np.atleast_2d(d2).astype(float),
        fallback_depth,
    )


def _closest_midpoints(o1, d1, o2, d2, fallback_depth):
    o1, o2 = np.broadcast_to(o1, d1.shape), np.broadcast_to(o2, d2.shape)
    w0 = o1 - o2
    a = np.einsum("ij,ij->i", d1, d1)
    b = np.einsum("ij,ij->i", d1, d2)
    c = np.einsum("ij,ij->i", d2, d2)
    d = np.einsum("ij,ij->i", d1, w0)
    e = np.einsum("ij,ij->i", d2, w0)
    sin = np.linalg.norm(np.cross(d1, d2), axis=1) / np.sqrt(a * c)
    degenerate = sin < PARALLEL_SIN
    denom = np.where(degenerate, 1.0, a * c - b * b)
    s = (b * e - c * d) / denom
    t = (a * e - b * d) / denom
    p1 = o1 + s[:, None] * d1
    p2 = o2 + t[:, None] * d2
    mid = (p1 + p2) / 2.0
    if degenerate.any():
        u1 = d1 / np.sqrt(a)[:, None]
        u2 = d2 / np.sqrt(c)[:, None]
        mean_dir = (u1 + u2) / 2.0
        mean_dir /= np.linalg.norm(mean_dir, axis=1, keepdims=True)
        fallback = (o1 + o2) / 2.0 + fallback_depth * mean_dir
        mid = np.where(degenerate[:, None], fallback, mid)
    return mid, degenerate


def project_to_image(point, cam: CameraModel) -> np.ndarray:
    """Pinhole projection of ``[..., 3]`` points to ``[..., 2]`` pixels."""
    p = np.asarray(point, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("point at or behind the camera plane (depth <= 0)")
    cx, cy = cam.center
    f = cam.focal
    return np.stack([cx + f * p[..., 0] / z, cy + f * p[..., 1] / z], axis=-1)


def project_window(w: GazeWindow, cam: CameraModel = CameraModel()) -> GazeWindow:
    if w.representation != POINT3D:
        raise DataError(f"can only project point3d gaze, got {w.representation}")
    return GazeWindow(project_to_image(w.samples, cam), w.hz, w.duration, PROJECTION2D, cam.center)


def differentiate(w: GazeWindow) -> GazeWindow:
    """Forward differences scaled by the sample rate.

    The first velocity is repeated so the window keeps its sample count.
    """
    if w.representation in (VELOCITY3D, VELOCITY2D):
        raise DataError("window is already a velocity")
    if len(w) < 2:
        raise DataError("differentiation needs at least two samples")
    v = np.diff(w.samples, axis=0) * w.hz
    v = np.concatenate([v[:1], v], axis=0)
    rep = VELOCITY3D if w.representation == POINT3D else VELOCITY2D
    return GazeWindow(v, w.hz, w.duration, rep, (0.0, 0.0))


def decimation_indices(n: int, source_hz: float, target_hz: float) -> np.ndarray:
    if target_hz <= 0 or source_hz % target_hz:
        raise ConfigError(f"target rate {target_hz} Hz does not divide source rate {source_hz} Hz")
    step = int(round(source_hz / target_hz))
    return np.arange(n - 1, -1, -step)[::-1]


def resample(w: GazeWindow, target_hz: float) -> GazeWindow:
    """Stride decimation that keeps the most recent sample."""
    if target_hz == w.hz:
        return w
    idx = decimation_indices(len(w), w.hz, target_hz)
    return GazeWindow(w.samples[idx], target_hz, w.duration, w.representation, w.center)


def _rotate_xy(x, y, quarter_turns):
    k = quarter_turns % 4
    if k == 0:
        return x, y
    if k == 1:
        return -y, x
    if k == 2:
        return -x, -y
    return y, -x


def rotate_gaze(w: GazeWindow, quarter_turns: int) -> GazeWindow:
    """Rotate the (x, y) components by 90 degrees per turn about the viewing axis."""
    cx, cy = w.center
    s = w.samples.copy()
    x, y = s[:, 0] - cx, s[:, 1] - cy
    rx, ry = _rotate_xy(x, y, int(quarter_turns))
    s[:, 0] = rx + cx
    s[:, 1] = ry + cy
    return replace(w, samples=s)


def flip_gaze(w: GazeWindow) -> GazeWindow:
    """Mirror horizontally: negate x about the window's centre."""
    cx = w.center[0]
    s = w.samples.copy()
    s[:, 0] = -(s[:, 0] - cx) + cx
    return replace(w, samples=s)


def add_gaze_noise(w: GazeWindow, sigma: float, seed: int) -> GazeWindow:
    if sigma < 0:
        raise ConfigError("noise sigma must be non-negative")
    if sigma == 0:
        return replace(w, samples=w.samples.copy())
    noise = stream(seed, "gaze-noise").normal(0.0, sigma, size=w.samples.shape)
    return replace(w, samples=w.samples + noise)


def crop_geometry(fov_deg: float, cam: CameraModel = CameraModel()) -> int:
    """Side of the square foveated crop, rounded to the nearest even pixel count."""
    if not 0.0 < fov_deg <= cam.fov_deg:
        raise ConfigError(f"crop field of view must lie in (0, {cam.fov_deg}]")
    half = fov_deg / cam.fov_deg * cam.width / 2.0
    return 2 * int(math.floor(half + 0.5))


def pixel_angle_x(x_px, cam: CameraModel):
    """Horizontal angle in degrees of the pixel column ``x_px`` from the optical axis."""
    return np.degrees(np.arctan((np.asarray(x_px, dtype=np.float64) - cam.center[0]) / cam.focal))


def gaze_span(w: GazeWindow, cam: CameraModel = CameraModel()) -> float:
    """Horizontal angular extent, in degrees, of a pixel-space gaze window."""
    if w.representation != PROJECTION2D:
        raise DataError(f"gaze span needs projection2d gaze, got {w.representation}")
    x = w.samples[:, 0]
    return float(pixel_angle_x(x.max(), cam) - pixel_angle_x(x.min(), cam))
