"""Head-motion (6-DoF) windows: gravity-free acceleration then angular rate."""

from __future__ import annotations

import math

import numpy as np

from ..data import ImuWindow, ScenarioSpec
from ..errors import ConfigError
from ..rng import stream
from .config import DEFAULT_SIM, SimConfig
from .scanpath import clip_choices

ACC_NOISE = 0.03
GYRO_NOISE = 0.005


def _smooth_noise(rng, n, f, sigma, cutoff_hz):
    """Gaussian noise low-passed by a moving average of ~1/cutoff seconds."""
    width = max(1, int(round(f / cutoff_hz)))
    raw = rng.normal(0.0, sigma * math.sqrt(width), n + width - 1)
    return np.convolve(raw, np.ones(width) / width, mode="valid")


def _pulses(rng, t, count, amp_range, width_range, t_span):
    out = np.zeros_like(t)
    for _ in range(count):
        center = rng.uniform(t_span[0], t_span[1])
        amp = rng.uniform(*amp_range) * (1 if rng.random() < 0.5 else -1)
        width = rng.uniform(*width_range)
        out += amp * np.exp(-0.5 * ((t - center) / width) ** 2)
    return out


def gen_imu(spec: ScenarioSpec, f: float = 60, T: float = 2.0, cfg: SimConfig = DEFAULT_SIM) -> ImuWindow:
    if T <= 0:
        raise ConfigError("IMU window duration must be positive")
    if f <= 0:
        raise ConfigError("IMU rate must be positive")
    n = int(round(f * T))
    t = np.arange(n) / f
    ch = clip_choices(spec, cfg)
    rng = stream(spec.seed, "imu")
    acc = rng.normal(0.0, ACC_NOISE, (n, 3))
    gyro = rng.normal(0.0, GYRO_NOISE, (n, 3))
    # slow postural sway, present in every profile
    for axis in range(3):
        acc[:, axis] += _smooth_noise(rng, n, f, 0.02, 0.5)
        gyro[:, axis] += _smooth_noise(rng, n, f, 0.01, 0.5)

    motion = ch.motion
    ph = ch.phases
    fs = ch.step_hz
    if motion == "stationary":
        pass
    elif motion == "speaking":
        rate = rng.uniform(4.0, 6.0)
        envelope = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t + ph[2])
        gyro[:, 0] += rng.uniform(0.03, 0.06) * envelope * np.sin(2 * np.pi * rate * t + ph[3])
        acc[:, 1] += 0.08 * envelope * np.sin(2 * np.pi * rate * t + ph[4])
    elif motion == "walking":
        amp = rng.uniform(1.5, 2.5)
        acc[:, 1] += amp * np.sin(2 * np.pi * fs * t + ph[1]) + 0.3 * amp * np.sin(4 * np.pi * fs * t + ph[2])
        acc[:, 0] += 0.4 * np.sin(np.pi * fs * t + ph[0])
        acc[:, 2] += 0.3 * np.sin(2 * np.pi * fs * t + ph[3])
        gyro[:, 0] += 0.15 * np.sin(2 * np.pi * fs * t + ph[1] + 0.5)
        gyro[:, 1] += 0.12 * np.sin(np.pi * fs * t + ph[0] + math.pi)
        gyro[:, 2] += 0.08 * np.sin(np.pi * fs * t + ph[4])
    elif motion == "writing":
        k = int(rng.integers(1, 3))
        for _ in range(k):
            c = rng.uniform(0, T)
            w = rng.uniform(0.08, 0.15)
            a = rng.uniform(0.4, 0.9)
            gyro[:, 0] += a * np.exp(-0.5 * ((t - c) / w) ** 2)
            gyro[:, 0] -= a * np.exp(-0.5 * ((t - c - rng.uniform(0.4, 0.8)) / w) ** 2)
        acc[:, 0] += _smooth_noise(rng, n, f, 0.1, 3.0)
    elif motion == "head_turns":
        gyro[:, 1] += _pulses(rng, t, int(rng.integers(1, 4)), (1.0, 2.5), (0.08, 0.15), (0.0, T))
        gyro[:, 0] += _pulses(rng, t, int(rng.integers(0, 2)), (0.2, 0.6), (0.08, 0.15), (0.0, T))
        acc[:, 0] += _smooth_noise(rng, n, f, 0.15, 4.0)
    elif motion == "active":
        for axis in range(3):
            acc[:, axis] += _smooth_noise(rng, n, f, 0.8, 3.0)
            gyro[:, axis] += _smooth_noise(rng, n, f, 0.4, 2.0)
    else:
        raise ConfigError(f"unknown motion profile {motion!r}")
    return ImuWindow(np.round(np.concatenate([acc, gyro], axis=1), 5), f, T)
