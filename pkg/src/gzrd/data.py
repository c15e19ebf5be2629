"""Clip, patch and stream containers plus their JSONL wire format.

One JSON object per line::

    {"id", "label", "meta": {...},
     "gaze": {"hz", "repr", "data": [[x, y, z], ...]} | null,
     "imu":  {"hz", "data": [[6 floats], ...]} | null,
     "rgb":  {"h", "w", "c", "data": base64 of row-major uint8} | null}

Alternating sequences use the same object with full-length streams, an
``"rgb"`` entry holding timed scene frames, and ``"change_points"``.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, DataError
from .geometry import GazeWindow

LABELS = ("not_reading", "reading")
MODES = ("engaged", "skim", "scan", "out_loud", "walk_read", "write_read", "none")
MEDIA = ("print", "digital", "objects", "none")
DIRECTIONS = ("ltr", "rtl", "vertical")
ACTIVITIES = ("daily", "hard_negative")
MODALITIES = ("gaze", "rgb", "imu")

# class order used by the multiclass heads and their confusion matrices
TASK_CLASSES = {
    "binary": ("not_reading", "reading"),
    "mode7": ("none", "walk_read", "out_loud", "engaged", "scan", "write_read", "skim"),
    "medium4": ("none", "print", "digital", "objects"),
}


@dataclass(frozen=True)
class ScenarioSpec:
    label: str = "reading"
    mode: str = "engaged"
    medium: str = "print"
    direction: str = "ltr"
    activity: str | None = None
    seed: int = 0
    pattern: str | None = None  # gaze behaviour for negatives; drawn from the seed when None
    motion: str | None = None  # head-motion profile; drawn from the seed when None
    scenario: str | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"unknown label {self.label!r}")
        if self.mode not in MODES or self.medium not in MEDIA or self.direction not in DIRECTIONS:
            raise ConfigError(f"bad scenario fields: {self.mode}/{self.medium}/{self.direction}")
        if self.label == "reading" and (self.mode == "none" or self.medium == "none"):
            raise ConfigError("a reading scenario needs a reading mode and medium")
        if self.label == "not_reading" and self.mode != "none":
            raise ConfigError("a non-reading scenario has mode 'none'")
        if self.activity is not None and self.activity not in ACTIVITIES:
            raise ConfigError(f"unknown activity {self.activity!r}")

    @property
    def is_reading(self) -> bool:
        return self.label == "reading"

    @property
    def tag(self) -> str:
        if self.scenario:
            return self.scenario
        return "reading" if self.is_reading else (self.activity or "daily")

    def to_meta(self) -> dict:
        meta = {k: v for k, v in asdict(self).items() if v is not None}
        meta["scenario"] = self.tag
        return meta

    @classmethod
    def from_meta(cls, meta: dict) -> "ScenarioSpec":
        known = {k: meta[k] for k in cls.__dataclass_fields__ if k in meta}
        return cls(**known)


def class_index(spec: ScenarioSpec, task: str) -> int:
    if task not in TASK_CLASSES:
        raise ConfigError(f"unknown task {task!r}")
    key = {"binary": spec.label, "mode7": spec.mode, "medium4": spec.medium}[task]
    return TASK_CLASSES[task].index(key)


@dataclass
class RgbPatch:
    """``data`` is ``[H, W, C]`` uint8."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.dtype != np.uint8:
            raise DataError(f"RGB patch must be [H, W, C] uint8, got {self.data.shape} {self.data.dtype}")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class ImuWindow:
    """``[n, 6]`` samples: linear acceleration (m/s^2, gravity removed) then angular rate (rad/s)."""

    samples: np.ndarray
    hz: float
    duration: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != 6:
            raise DataError(f"IMU window must be [n, 6], got {self.samples.shape}")
        if self.duration <= 0:
            raise ConfigError("IMU window duration must be positive")
        if self.samples.shape[0] != int(round(self.hz * self.duration)):
            raise DataError("IMU sample count does not match rate x duration")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class LabeledClip:
    id: str
    label: int
    meta: ScenarioSpec
    gaze: GazeWindow | None = None
    rgb: RgbPatch | None = None
    imu: ImuWindow | None = None

    def __post_init__(self):
        if self.gaze is None and self.rgb is None and self.imu is None:
            raise DataError(f"clip {self.id} carries no modality")
        if self.gaze is not None and self.imu is not None:
            if abs(self.gaze.duration - self.imu.duration) > 1e-9:
                raise DataError(f"clip {self.id}: gaze and IMU durations differ")

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(m for m in MODALITIES if getattr(self, m) is not None)

    @property
    def duration(self) -> float:
        for w in (self.gaze, self.imu):
            if w is not None:
                return w.duration
        return 0.0

    def without(self, *modalities) -> "LabeledClip":
        fields = {m: None if m in modalities else getattr(self, m) for m in MODALITIES}
        return LabeledClip(self.id, self.label, self.meta, **fields)


@dataclass
class SceneFrame:
    """A grayscale capture of part of the full camera image, valid from ``t`` on.

    ``x0, y0`` place the frame's top-left pixel in full-image coordinates.
    """

    t: float
    x0: int
    y0: int
    data: np.ndarray  # [h, w, c] uint8


@dataclass
class AlternatingSequence:
    scenario_id: int
    gaze: np.ndarray  # [n, 3] point3d at gaze_hz
    gaze_hz: float
    imu: np.ndarray  # [m, 6] at imu_hz
    imu_hz: float
    frames: list = field(default_factory=list)
    change_points: list = field(default_factory=list)  # [(t, state)], state in {0, 1}
    initial_state: int = 0
    segments: list = field(default_factory=list)  # [(t_start, t_end, ScenarioSpec)]
    id: str = "sequence"

    @property
    def duration(self) -> float:
        return self.gaze.shape[0] / self.gaze_hz

    def state_at(self, t: float) -> int:
        state = self.initial_state
        for tc, s in self.change_points:
            if tc <= t:
                state = s
            else:
                break
        return state


# -- JSON encoding --------------------------------------------------------------
def _rows(a: np.ndarray) -> list:
    return a.tolist()


def encode_patch(p: np.ndarray) -> dict:
    h, w, c = p.shape
    return {"h": h, "w": w, "c": c, "data": base64.b64encode(np.ascontiguousarray(p).tobytes()).decode("ascii")}


def decode_patch(obj: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        return np.frombuffer(raw, dtype=np.uint8).reshape(obj["h"], obj["w"], obj["c"]).copy()
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad rgb payload: {exc}") from exc


def clip_to_json(clip: LabeledClip) -> dict:
    return {
        "id": clip.id,
        "label": int(clip.label),
        "meta": clip.meta.to_meta(),
        "gaze": None
        if clip.gaze is None
        else {"hz": clip.gaze.hz, "repr": clip.gaze.representation, "data": _rows(clip.gaze.samples)},
        "imu": None if clip.imu is None else {"hz": clip.imu.hz, "data": _rows(clip.imu.samples)},
        "rgb": None if clip.rgb is None else encode_patch(clip.rgb.data),
    }


def clip_from_json(obj: dict) -> LabeledClip:
    try:
        meta = ScenarioSpec.from_meta(obj.get("meta") or {})
        gaze = imu = rgb = None
        if obj.get("gaze"):
            g = obj["gaze"]
            data = np.asarray(g["data"], dtype=np.float64)
            gaze = GazeWindow(data, g["hz"], data.shape[0] / g["hz"], g.get("repr", "point3d"))
        if obj.get("imu"):
            i = obj["imu"]
            data = np.asarray(i["data"], dtype=np.float64)
            imu = ImuWindow(data, i["hz"], data.shape[0] / i["hz"])
        if obj.get("rgb"):
            rgb = RgbPatch(decode_patch(obj["rgb"]))
        return LabeledClip(str(obj["id"]), int(obj["label"]), meta, gaze, rgb, imu)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed clip record: {exc!r}") from exc


def sequence_to_json(seq: AlternatingSequence) -> dict:
    return {
        "id": seq.id,
        "label": None,
        "meta": {"scenario": f"alternating-{seq.scenario_id}", "scenario_id": seq.scenario_id},
        "gaze": {"hz": seq.gaze_hz, "repr": "point3d", "data": _rows(seq.gaze)},
        "imu": {"hz": seq.imu_hz, "data": _rows(seq.imu)},
        "rgb": {"frames": [{"t": f.t, "x0": f.x0, "y0": f.y0, **encode_patch(f.data)} for f in seq.frames]},
        "initial_state": seq.initial_state,
        "change_points": [{"t": t, "state": s} for t, s in seq.change_points],
        "segments": [{"t0": a, "t1": b, "meta": spec.to_meta()} for a, b, spec in seq.segments],
    }


def sequence_from_json(obj: dict) -> AlternatingSequence:
    try:
        frames = [
            SceneFrame(f["t"], f["x0"], f["y0"], decode_patch(f)) for f in (obj.get("rgb") or {}).get("frames", [])
        ]
        return AlternatingSequence(
            scenario_id=int(obj["meta"].get("scenario_id", 0)),
            gaze=np.asarray(obj["gaze"]["data"], dtype=np.float64).reshape(-1, 3),
            gaze_hz=obj["gaze"]["hz"],
            imu=np.asarray(obj["imu"]["data"], dtype=np.float64).reshape(-1, 6),
            imu_hz=obj["imu"]["hz"],
            frames=frames,
            change_points=[(c["t"], int(c["state"])) for c in obj.get("change_points", [])],
            initial_state=int(obj.get("initial_state", 0)),
            segments=[(s["t0"], s["t1"], ScenarioSpec.from_meta(s["meta"])) for s in obj.get("segments", [])],
            id=str(obj.get("id", "sequence")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed sequence record: {exc!r}") from exc


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_clips(path, clips: Iterable[LabeledClip]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for clip in clips:
            fh.write(dumps_line(clip_to_json(clip)) + "\n")
            n += 1
    return n


def iter_records(path) -> Iterator[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def read_clips(path) -> list[LabeledClip]:
    return [clip_from_json(obj) for obj in iter_records(path)]


def write_sequence(path, seq: AlternatingSequence) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_line(sequence_to_json(seq)) + "\n")


def read_sequences(path) -> list[AlternatingSequence]:
    return [sequence_from_json(obj) for obj in iter_records(path)]
