"""Fixation/saccade trajectories for reading and non-reading gaze.

Trajectories are built in (horizontal angle, vertical angle, depth) space as
a piecewise sequence of holds, ballistic saccades and linear pursuit legs,
sampled on the sensor clock, then mapped to 3D points in the device frame.
Writing direction is applied last, as a pure symmetry of the left-to-right
path, so ``rtl`` and ``vertical`` clips are exact mirrors/rotations of the
``ltr`` clip drawn with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import ScenarioSpec
from ..errors import ConfigError
from ..geometry import POINT3D, GazeWindow, flip_gaze, rotate_gaze
from ..rng import stream
from .config import DEFAULT_SIM, SimConfig

HOLD, BALLISTIC, LINEAR = 0, 1, 2
DAILY_PATTERNS = ("random_saccades", "pursuit", "long_fixation", "inspect")
HARD_PATTERNS = ("clusters",)
NEGATIVE_MOTIONS = ("stationary", "walking", "head_turns", "active")


@dataclass(frozen=True)
class Choices:
    """Per-clip categorical draws shared by the gaze and IMU generators."""

    pattern: str | None
    motion: str
    step_hz: float
    phases: tuple


def clip_choices(spec: ScenarioSpec, cfg: SimConfig = DEFAULT_SIM) -> Choices:
    rng = stream(spec.seed, "choices")
    step_hz = float(rng.uniform(*cfg.walk_step_hz))
    phases = tuple(float(p) for p in rng.uniform(0, 2 * math.pi, 6))
    if spec.is_reading:
        motion = {
            "out_loud": "speaking",
            "walk_read": "walking",
            "write_read": "writing",
        }.get(spec.mode, "stationary")
        return Choices(None, spec.motion or motion, step_hz, phases)
    if spec.activity == "hard_negative":
        pattern = spec.pattern or HARD_PATTERNS[0]
        motion = spec.motion or ("stationary", "head_turns")[int(rng.random() < 0.4)]
    else:
        pattern = spec.pattern or str(rng.choice(DAILY_PATTERNS, p=[0.4, 0.25, 0.15, 0.2]))
        motion = spec.motion or str(rng.choice(NEGATIVE_MOTIONS, p=[0.25, 0.3, 0.25, 0.2]))
    return Choices(pattern, motion, step_hz, phases)


class Trajectory:
    """Piecewise path in (ax_deg, ay_deg, depth_m), starting at time ``t0``."""

    def __init__(self, t0: float, start):
        self.t = t0
        self.pos = np.asarray(start, dtype=np.float64)
        self._t0, self._t1, self._p0, self._p1, self._kind = [], [], [], [], []
        self.fixations = []  # (start, end) of every hold

    def _push(self, dur, target, kind):
        target = np.asarray(target, dtype=np.float64)
        self._t0.append(self.t)
        self._t1.append(self.t + dur)
        self._p0.append(self.pos)
        self._p1.append(target)
        self._kind.append(kind)
        self.t += dur
        self.pos = target

    def hold(self, dur):
        self.fixations.append((self.t, self.t + dur))
        self._push(dur, self.pos, HOLD)

    def saccade(self, target):
        target = np.asarray(target, dtype=np.float64)
        amp = math.hypot(target[0] - self.pos[0], target[1] - self.pos[1])
        self._push((21.0 + 2.2 * amp) / 1000.0, target, BALLISTIC)

    def glide(self, target, dur):
        self._push(dur, target, LINEAR)

    def sample(self, times: np.ndarray) -> np.ndarray:
        t0 = np.asarray(self._t0)
        t1 = np.asarray(self._t1)
        p0 = np.asarray(self._p0)
        p1 = np.asarray(self._p1)
        kind = np.asarray(self._kind)
        idx = np.clip(np.searchsorted(t0, times, side="right") - 1, 0, len(t0) - 1)
        u = np.clip((times - t0[idx]) / np.maximum(t1[idx] - t0[idx], 1e-12), 0.0, 1.0)
        u = np.where(kind[idx] == BALLISTIC, 0.5 - 0.5 * np.cos(np.pi * u), u)
        u = np.where(kind[idx] == HOLD, 0.0, u)
        return p0[idx] + u[:, None] * (p1[idx] - p0[idx])


def _fixation_s(rng, mean_ms, sd_ms, cfg):
    return max(cfg.fixation_min_ms, rng.normal(mean_ms, sd_ms)) / 1000.0


def _to_points(path: np.ndarray) -> np.ndarray:
    ax, ay, depth = np.radians(path[:, 0]), np.radians(path[:, 1]), path[:, 2]
    return np.stack([depth * np.tan(ax), depth * np.tan(ay), depth], axis=1)


def _sample_times(f: float, T: float) -> np.ndarray:
    if T <= 0 or f <= 0:
        raise ConfigError("duration and frequency must be positive")
    n = int(round(f * T))
    return np.arange(n) / f


def _apply_direction(w: GazeWindow, direction: str) -> GazeWindow:
    if direction == "rtl":
        return flip_gaze(w)
    if direction == "vertical":
        return rotate_gaze(w, 1)
    return w


def _finish(path_samples, spec, f, T, cfg, rng_noise, tremor=None):
    pts = _to_points(path_samples)
    sigma = cfg.tremor_sigma_m if tremor is None else tremor
    if sigma > 0:
        pts = pts + rng_noise.normal(0.0, sigma, pts.shape)
    w = GazeWindow(np.round(pts, 6), f, T, POINT3D)
    return _apply_direction(w, spec.direction)


# -- reading -----------------------------------------------------------------
def simulate_reading(spec: ScenarioSpec, f: float, T: float, cfg: SimConfig = DEFAULT_SIM):
    """Noise-free reading path: returns ``(times, [n, 3] angle/depth samples, Trajectory)``."""
    if not spec.is_reading:
        raise ConfigError("reading scanpath requested for a non-reading scenario")
    times = _sample_times(f, T)
    rng = stream(spec.seed, "gaze-path")
    mode, medium = spec.mode, spec.medium
    fix_mu, fix_sd = cfg.fixation_ms[mode]
    sac_mu, sac_sd = cfg.saccade_deg[mode]
    line_len = rng.uniform(*cfg.line_len_deg[medium])
    spacing = cfg.line_spacing_deg[medium] * rng.uniform(0.85, 1.15)
    depth = rng.uniform(*cfg.depth_m[medium])
    x0 = rng.uniform(-4.0, 4.0) - line_len / 2
    y0 = rng.uniform(-6.0, 2.0)
    n_lines = cfg.lines_per_page if medium != "objects" else int(rng.integers(1, 4))
    line = int(rng.integers(0, n_lines))
    x = x0 + rng.uniform(0, line_len)

    def pos(x, line):
        return (x, y0 + line * spacing, depth)

    path = Trajectory(-cfg.burn_in_s, pos(x, line))
    next_glance = path.t + rng.uniform(*cfg.glance_every_s)
    while path.t < T:
        path.hold(_fixation_s(rng, fix_mu, fix_sd, cfg))
        if mode == "write_read" and path.t >= next_glance:
            here = path.pos.copy()
            spot = np.array([here[0] + rng.normal(0, 3.0), here[1] + rng.uniform(10, 15), depth + 0.1])
            path.saccade(spot)
            for _ in range(int(rng.integers(1, 4))):
                path.hold(rng.uniform(0.2, 0.5))
                path.saccade(spot + [rng.normal(0, 1.0), rng.normal(0, 0.5), 0.0])
            path.hold(rng.uniform(0.15, 0.3))
            path.saccade(here)
            next_glance = path.t + rng.uniform(*cfg.glance_every_s)
            continue
        if mode == "scan" and rng.random() < 0.35:
            x = x0 + rng.uniform(0, line_len)
            line = int(np.clip(line + rng.integers(-3, 7), 0, n_lines - 1))
        else:
            lo = 0.8 if mode != "skim" else 2.0
            amp = float(np.clip(rng.normal(sac_mu, sac_sd), lo, 3 * sac_mu))
            if x + amp > x0 + line_len:
                x = x0 + rng.uniform(0.0, cfg.return_undershoot_deg)
                line += 1 if mode != "skim" else int(rng.integers(1, 4))
                if line >= n_lines:
                    line = 0
            else:
                x += amp
        path.saccade(pos(x, line))
    samples = path.sample(times)
    if mode == "walk_read":
        ch = clip_choices(spec, cfg)
        hx, vy = cfg.walk_vor_deg
        samples[:, 0] += hx * np.sin(np.pi * ch.step_hz * times + ch.phases[0])
        samples[:, 1] += vy * np.sin(2 * np.pi * ch.step_hz * times + ch.phases[1])
    return times, samples, path


def gen_reading_scanpath(spec: ScenarioSpec, f: float = 60, T: float = 2.0, cfg: SimConfig = DEFAULT_SIM, tremor=None):
    _, samples, _ = simulate_reading(spec, f, T, cfg)
    return _finish(samples, spec, f, T, cfg, stream(spec.seed, "gaze-tremor"), tremor)


# -- not reading ---------------------------------------------------------------
def simulate_nonreading(spec: ScenarioSpec, f: float, T: float, cfg: SimConfig = DEFAULT_SIM):
    if spec.is_reading:
        raise ConfigError("non-reading scanpath requested for a reading scenario")
    times = _sample_times(f, T)
    rng = stream(spec.seed, "gaze-path")
    ch = clip_choices(spec, cfg)
    start = np.array([rng.uniform(-10, 10), rng.uniform(-8, 8), rng.uniform(0.5, 4.0)])
    path = Trajectory(-cfg.burn_in_s, start)
    kind = ch.pattern
    if kind == "random_saccades":
        sign = 1.0 if rng.random() < 0.5 else -1.0
        while path.t < T:
            path.hold(rng.uniform(0.15, 0.6))
            amp = rng.uniform(5.0, 20.0)
            theta = rng.uniform(-math.pi / 3, math.pi / 3)
            nx = path.pos[0] + sign * amp * math.cos(theta)
            ny = path.pos[1] + amp * math.sin(theta)
            if abs(ny) > 20:
                ny = math.copysign(40, ny) - ny
            nx = float(np.clip(nx, -35, 35))
            path.saccade((nx, ny, rng.uniform(0.5, 4.0)))
            sign = -sign
    elif kind == "pursuit":
        depth = rng.uniform(1.0, 4.0)
        while path.t < T:
            speed = rng.uniform(5.0, 20.0)
            heading = rng.uniform(0, 2 * math.pi)
            turn = rng.uniform(-2.0, 2.0)  # rad/s of heading change: arcs
            leg_t = 0.05
            for _ in range(int(rng.integers(8, 30))):
                heading += turn * leg_t
                target = path.pos + [speed * leg_t * math.cos(heading), speed * leg_t * math.sin(heading), 0.0]
                target[:2] = np.clip(target[:2], -30, 30)
                target[2] = depth
                path.glide(target, leg_t)
            if rng.random() < 0.5:
                path.saccade(path.pos + [rng.normal(0, 2.0), rng.normal(0, 2.0), 0.0])
            path.hold(rng.uniform(0.1, 0.3))
    elif kind == "long_fixation":
        path = Trajectory(-cfg.burn_in_s, (start[0], start[1], rng.uniform(1.0, 3.0)))
        path.hold(T + cfg.burn_in_s + 1.0)
    elif kind == "inspect":
        depth = rng.uniform(0.3, 1.2)
        center = path.pos[:2].copy()
        path.pos[2] = depth
        while path.t < T:
            path.hold(rng.uniform(0.2, 0.45))
            step = rng.uniform(1.0, 4.0)
            theta = rng.uniform(0, 2 * math.pi)
            nxt = path.pos[:2] + step * np.array([math.cos(theta), math.sin(theta)])
            nxt = center + np.clip(nxt - center, -5, 5)
            path.saccade((nxt[0], nxt[1], depth))
    elif kind == "clusters":
        medium = spec.medium if spec.medium != "none" else "print"
        depth = rng.uniform(*cfg.depth_m[medium])
        k = int(rng.integers(2, 5))
        centers = start[:2] + rng.uniform(-6, 6, size=(k, 2))
        current = int(rng.integers(k))
        path.pos = np.array([*centers[current], depth])
        while path.t < T:
            path.hold(rng.uniform(0.2, 0.5))
            current = (current + int(rng.integers(1, k))) % k
            jitter = rng.normal(0, 0.3, 2)
            path.saccade((*(centers[current] + jitter), depth))
    else:
        raise ConfigError(f"unknown non-reading pattern {kind!r}")
    samples = path.sample(times)
    if ch.motion == "walking":
        hx, vy = cfg.walk_vor_deg
        samples[:, 0] += hx * np.sin(np.pi * ch.step_hz * times + ch.phases[0])
        samples[:, 1] += vy * np.sin(2 * np.pi * ch.step_hz * times + ch.phases[1])
    return times, samples, path


def gen_nonreading_scanpath(spec: ScenarioSpec, f: float = 60, T: float = 2.0, cfg: SimConfig = DEFAULT_SIM, tremor=None):
    _, samples, _ = simulate_nonreading(spec, f, T, cfg)
    return _finish(samples, spec, f, T, cfg, stream(spec.seed, "gaze-tremor"), tremor)


def gen_scanpath(spec: ScenarioSpec, f: float = 60, T: float = 2.0, cfg: SimConfig = DEFAULT_SIM, tremor=None):
    if spec.is_reading:
        return gen_reading_scanpath(spec, f, T, cfg, tremor)
    return gen_nonreading_scanpath(spec, f, T, cfg, tremor)
