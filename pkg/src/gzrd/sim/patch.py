"""Grayscale scene textures standing in for foveated RGB crops.

Text is drawn as rows of word-shaped stroke patterns with a line pitch that
depends on the medium; scenes without text are smooth blobs, gradients or
near-uniform surfaces.
"""

from __future__ import annotations

import math

import numpy as np

from ..data import RgbPatch, ScenarioSpec
from ..errors import ConfigError
from ..rng import stream
from .config import DEFAULT_SIM, SimConfig

SCENE_KINDS = ("blobs", "gradient", "uniform")


def _text(h, w, rng, pitch, contrast, bg):
    y = np.arange(h)[:, None]
    x = np.arange(w)[None, :]
    phase_y = rng.uniform(0, pitch)
    row = np.floor((y + phase_y) / pitch).astype(int)
    within = (y + phase_y) % pitch
    xheight = 0.55 * pitch
    char_w = max(2.0, 0.5 * pitch)
    n_lines = int(row.max()) + 1
    n_chars = int(math.ceil(w / char_w)) + 2
    letters = np.zeros((n_lines, n_chars), dtype=bool)
    shade = rng.uniform(0.6, 1.0, (n_lines, n_chars))
    offsets = rng.uniform(0, char_w, n_lines)
    for li in range(n_lines):
        c = -int(rng.integers(0, 6))
        end = n_chars if rng.random() > 0.2 else int(rng.integers(n_chars // 3, n_chars))
        while c < end:
            word = int(rng.integers(2, 9))
            letters[li, max(c, 0) : max(0, min(c + word, end))] = True
            c += word + 1
    rows = np.broadcast_to(row, (h, w))
    char_idx = np.floor((x + offsets[rows]) / char_w).astype(int).clip(0, n_chars - 1)
    stroke = ((x + offsets[rows]) % char_w) < 0.55 * char_w
    ink = (within < xheight) & letters[rows, char_idx] & stroke
    return bg - contrast * ink * shade[rows, char_idx]


def _blobs(h, w, rng):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    img = np.full((h, w), rng.uniform(0.3, 0.7))
    # blob density is per 64x64 area so large scene frames look like tiled crops
    count = int(rng.integers(2, 6) * max(1.0, h * w / 4096.0))
    for _ in range(count):
        cy, cx = rng.uniform(-0.2 * h, 1.2 * h), rng.uniform(-0.2 * w, 1.2 * w)
        s = rng.uniform(8, 28)
        lo_y, hi_y = max(0, int(cy - 3 * s)), min(h, int(cy + 3 * s) + 1)
        lo_x, hi_x = max(0, int(cx - 3 * s)), min(w, int(cx + 3 * s) + 1)
        if lo_y >= hi_y or lo_x >= hi_x:
            continue
        yy, xx = y[lo_y:hi_y, lo_x:hi_x], x[lo_y:hi_y, lo_x:hi_x]
        img[lo_y:hi_y, lo_x:hi_x] += rng.uniform(-0.35, 0.35) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    return img


def _gradient(h, w, rng):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    theta = rng.uniform(0, 2 * math.pi)
    ramp = (x * math.cos(theta) + y * math.sin(theta)) / max(h, w)
    return rng.uniform(0.3, 0.7) + rng.uniform(0.1, 0.3) * ramp


def _uniform(h, w, rng):
    return np.full((h, w), rng.uniform(0.2, 0.8))


def render_texture(kind: str, h: int, w: int, rng, medium: str = "print", cfg: SimConfig = DEFAULT_SIM):
    """Float image in [0, 1]; text pitch is in camera pixels, so it does not change with crop size."""
    if kind == "text":
        pitch = rng.uniform(*cfg.line_pitch_px[medium])
        if medium == "print":
            img = _text(h, w, rng, pitch, rng.uniform(0.5, 0.7), rng.uniform(0.8, 0.92))
        elif medium == "digital":
            img = _text(h, w, rng, pitch, rng.uniform(0.6, 0.85), rng.uniform(0.9, 0.98))
            img -= 0.03 * ((np.arange(w)[None, :] % 3) == 0)
        else:
            base = _gradient(h, w, rng) if rng.random() < 0.5 else _blobs(h, w, rng)
            band = _text(h, w, rng, pitch, rng.uniform(0.3, 0.5), 0.0)
            lo = int(rng.integers(0, max(1, h // 3)))
            hi = min(h, lo + int(pitch * rng.integers(1, 4)) + 2)
            mask = np.zeros((h, 1))
            mask[lo:hi] = 1.0
            img = base + 0.25 + band * mask
    elif kind == "faint_text":
        img = render_texture("text", h, w, rng, medium, cfg)
        img = img.mean() + (img - img.mean()) * rng.uniform(0.05, 0.2)
    elif kind == "blobs":
        img = _blobs(h, w, rng)
    elif kind == "gradient":
        img = _gradient(h, w, rng)
    elif kind == "uniform":
        img = _uniform(h, w, rng)
    else:
        raise ConfigError(f"unknown texture kind {kind!r}")
    img = img + rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


def texture_kind(spec: ScenarioSpec, rng, cfg: SimConfig = DEFAULT_SIM) -> tuple[str, str]:
    """(texture kind, medium) the scene shows for this scenario."""
    if spec.is_reading:
        kind = "faint_text" if rng.random() < cfg.faint_text_prob else "text"
        return kind, spec.medium
    if spec.activity == "hard_negative":
        medium = spec.medium if spec.medium != "none" else str(rng.choice(["print", "digital", "objects"]))
        return "text", medium
    return str(rng.choice(SCENE_KINDS, p=[0.5, 0.3, 0.2])), "print"


def to_uint8(img: np.ndarray, channels: int) -> np.ndarray:
    g = np.round(img * 255.0).astype(np.uint8)
    return np.repeat(g[:, :, None], channels, axis=2)


def gen_patch(spec: ScenarioSpec, size: int = 64, channels: int = 3, cfg: SimConfig = DEFAULT_SIM, kind=None) -> RgbPatch:
    if size <= 0:
        raise ConfigError("patch size must be positive")
    rng = stream(spec.seed, "rgb")
    k, medium = texture_kind(spec, rng, cfg)
    k = kind or k
    img = render_texture(k, size, size, rng, medium, cfg)
    if spec.direction == "vertical" and k in ("text", "faint_text"):
        img = img.T.copy()
    return RgbPatch(to_uint8(img, channels))
