"""Synthetic gaze, head-motion and scene generators."""

from .alternating import SCENARIOS, gen_alternating
from .config import DEFAULT_SIM, SimConfig
from .dataset import (
    ClipConfig,
    Manifest,
    ManifestEntry,
    binary_manifest,
    class_counts,
    gen_clip,
    gen_dataset,
    medium_manifest,
    mode_manifest,
)
from .imu import gen_imu
from .patch import gen_patch, render_texture
from .scanpath import gen_nonreading_scanpath, gen_reading_scanpath, gen_scanpath

__all__ = [
    "SCENARIOS",
    "DEFAULT_SIM",
    "ClipConfig",
    "Manifest",
    "ManifestEntry",
    "SimConfig",
    "binary_manifest",
    "class_counts",
    "gen_alternating",
    "gen_clip",
    "gen_dataset",
    "gen_imu",
    "gen_nonreading_scanpath",
    "gen_patch",
    "gen_reading_scanpath",
    "gen_scanpath",
    "medium_manifest",
    "mode_manifest",
    "render_texture",
]
