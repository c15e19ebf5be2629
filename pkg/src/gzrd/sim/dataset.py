"""Manifest-driven dataset generation."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..data import MODALITIES, LabeledClip, ScenarioSpec, write_clips
from ..errors import ConfigError
from ..geometry import CameraModel, crop_geometry
from ..rng import child_seed
from .config import DEFAULT_SIM, SimConfig
from .imu import gen_imu
from .patch import gen_patch
from .scanpath import gen_scanpath


@dataclass(frozen=True)
class ClipConfig:
    duration: float = 2.0
    gaze_hz: float = 60
    imu_hz: float = 60
    crop_fov_deg: float = 5.0
    channels: int = 3
    modalities: tuple = MODALITIES

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("clip duration must be positive")
        unknown = set(self.modalities) - set(MODALITIES)
        if unknown or not self.modalities:
            raise ConfigError(f"bad modality list {self.modalities}")

    @property
    def patch_px(self) -> int:
        return crop_geometry(self.crop_fov_deg, CameraModel())


def gen_clip(spec: ScenarioSpec, clip_id: str, cfg: ClipConfig = ClipConfig(), sim: SimConfig = DEFAULT_SIM) -> LabeledClip:
    gaze = gen_scanpath(spec, cfg.gaze_hz, cfg.duration, sim) if "gaze" in cfg.modalities else None
    rgb = gen_patch(spec, cfg.patch_px, cfg.channels, sim) if "rgb" in cfg.modalities else None
    imu = gen_imu(spec, cfg.imu_hz, cfg.duration, sim) if "imu" in cfg.modalities else None
    return LabeledClip(clip_id, int(spec.is_reading), spec, gaze, rgb, imu)


@dataclass
class ManifestEntry:
    label: str
    count: int
    mode: str | None = None
    medium: str | None = None
    direction: str = "ltr"
    activity: str | None = None
    pattern: str | None = None
    motion: str | None = None

    def spec(self, seed: int) -> ScenarioSpec:
        reading = self.label == "reading"
        return ScenarioSpec(
            label=self.label,
            mode=self.mode or ("engaged" if reading else "none"),
            medium=self.medium or ("print" if reading else "none"),
            direction=self.direction,
            activity=None if reading else (self.activity or "daily"),
            seed=seed,
            pattern=self.pattern,
            motion=self.motion,
        )


@dataclass
class Manifest:
    entries: list
    seed: int = 0
    clip: ClipConfig = field(default_factory=ClipConfig)
    out: str | None = None

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("manifest has no entries")
        for e in self.entries:
            if e.count < 0:
                raise ConfigError("manifest counts must be non-negative")
        if sum(e.count for e in self.entries) == 0:
            raise ConfigError("manifest requests zero clips")

    @classmethod
    def from_dict(cls, obj: dict) -> "Manifest":
        try:
            clip = obj.get("clip", {})
            if "modalities" in clip:
                clip = {**clip, "modalities": tuple(clip["modalities"])}
            return cls(
                entries=[ManifestEntry(**e) for e in obj.get("entries", [])],
                seed=int(obj.get("seed", 0)),
                clip=ClipConfig(**clip),
                out=obj.get("out"),
            )
        except TypeError as exc:
            raise ConfigError(f"bad manifest: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Manifest":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: manifest is not valid JSON ({exc.msg})") from exc
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        clip = asdict(self.clip)
        clip["modalities"] = list(clip["modalities"])
        return {
            "seed": self.seed,
            "clip": clip,
            "entries": [{k: v for k, v in asdict(e).items() if v is not None} for e in self.entries],
            **({"out": self.out} if self.out else {}),
        }

    def specs(self, seed: int | None = None):
        seed = self.seed if seed is None else seed
        index = 0
        for entry in self.entries:
            for _ in range(entry.count):
                yield index, entry.spec(child_seed(seed, "clip", index))
                index += 1


def gen_dataset(manifest: Manifest, seed: int | None = None, path=None, sim: SimConfig = DEFAULT_SIM) -> list[LabeledClip]:
    """Every clip is a pure function of (entry, seed, clip index)."""
    clips = [gen_clip(spec, f"clip-{i:06d}", manifest.clip, sim) for i, spec in manifest.specs(seed)]
    if path is not None:
        write_clips(path, clips)
    return clips


def class_counts(clips, key=lambda c: c.meta.label) -> dict:
    return dict(sorted(Counter(key(c) for c in clips).items()))


# -- canned manifests ---------------------------------------------------------
READING_MIX = (
    ("engaged", "print", 0.25),
    ("engaged", "digital", 0.15),
    ("engaged", "objects", 0.1),
    ("skim", "print", 0.1),
    ("scan", "digital", 0.1),
    ("out_loud", "print", 0.1),
    ("walk_read", "digital", 0.1),
    ("write_read", "print", 0.1),
)


def _split(n, weights):
    raw = [n * w for w in weights]
    counts = [int(r) for r in raw]
    for i in sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)[: n - sum(counts)]:
        counts[i] += 1
    return counts


def binary_manifest(n: int, seed: int = 0, clip: ClipConfig = ClipConfig(), hard_fraction: float = 0.3) -> Manifest:
    """Balanced reading / not-reading mix covering every mode, medium and negative kind."""
    n_pos = n // 2
    n_neg = n - n_pos
    entries = [
        ManifestEntry("reading", c, mode, medium)
        for (mode, medium, _), c in zip(READING_MIX, _split(n_pos, [w for *_, w in READING_MIX]))
    ]
    n_hard = int(round(n_neg * hard_fraction))
    entries.append(ManifestEntry("not_reading", n_neg - n_hard, activity="daily"))
    entries.append(ManifestEntry("not_reading", n_hard, activity="hard_negative"))
    return Manifest([e for e in entries if e.count], seed, clip)


def mode_manifest(per_class: int, seed: int = 0, clip: ClipConfig = ClipConfig()) -> Manifest:
    media = ("print", "digital", "objects")
    entries = []
    for mode in ("engaged", "skim", "scan", "out_loud", "walk_read", "write_read"):
        for medium, c in zip(media, _split(per_class, [0.5, 0.3, 0.2])):
            entries.append(ManifestEntry("reading", c, mode, medium))
    entries.append(ManifestEntry("not_reading", per_class - per_class // 3, activity="daily"))
    entries.append(ManifestEntry("not_reading", per_class // 3, activity="hard_negative"))
    return Manifest([e for e in entries if e.count], seed, clip)


def medium_manifest(per_class: int, seed: int = 0, clip: ClipConfig = ClipConfig()) -> Manifest:
    modes = ("engaged", "skim", "scan", "out_loud", "walk_read", "write_read")
    entries = []
    for medium in ("print", "digital", "objects"):
        for mode, c in zip(modes, _split(per_class, [1 / 6] * 6)):
            entries.append(ManifestEntry("reading", c, mode, medium))
    entries.append(ManifestEntry("not_reading", per_class - per_class // 3, activity="daily"))
    entries.append(ManifestEntry("not_reading", per_class // 3, activity="hard_negative"))
    return Manifest([e for e in entries if e.count], seed, clip)
