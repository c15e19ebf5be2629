"""Sliding-window reading detection over continuous streams.

Emissions happen at ``t = k * stride``.  The window for time ``t`` holds the
samples timed in ``(t - T, t]`` (sample ``i`` is timed ``i / hz``) plus an RGB
crop from the newest scene frame, centred on the last gaze point.  Raw
decisions pass through a hysteresis filter: the state flips only after ``h``
consecutive windows disagree with it.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import AlternatingSequence, ImuWindow, LabeledClip, RgbPatch, ScenarioSpec
from .errors import ConfigError, DataError, StreamGapError
from .geometry import POINT3D, CameraModel, GazeWindow, crop_geometry, project_to_image
from .model import Model, clip_inputs

_EPS = 1e-9
_PLACEHOLDER = ScenarioSpec("not_reading", "none", "none", activity="daily")


@dataclass(frozen=True)
class DetectorConfig:
    window: float = 2.0
    stride: float = 0.1
    threshold: float = 0.5
    hysteresis: int = 3
    crop_fov_deg: float = 5.0
    max_match: float = 5.0

    def __post_init__(self):
        if self.window <= 0 or self.stride <= 0:
            raise ConfigError("window and stride must be positive")
        if self.stride > self.window:
            raise ConfigError(f"stride {self.stride} s exceeds the {self.window} s window")
        if self.hysteresis < 1:
            raise ConfigError("hysteresis must be at least 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.max_match <= 0:
            raise ConfigError("match window must be positive")


@dataclass
class Emission:
    t: float
    score: float
    decision: int
    state: int


@dataclass
class DetectionTrace:
    window: float
    stride: float
    emissions: list = field(default_factory=list)
    change_points: list = field(default_factory=list)  # [(t, new_state)]

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.emissions])

    @property
    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.emissions])

    @property
    def states(self) -> np.ndarray:
        return np.array([e.state for e in self.emissions], dtype=np.int64)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "score", "state"])
            for e in self.emissions:
                w.writerow([repr(e.t), repr(e.score), e.state])


class Hysteresis:
    """Debounces raw decisions; the first decision sets the initial state."""

    def __init__(self, h: int):
        if h < 1:
            raise ConfigError("hysteresis must be at least 1")
        self.h = h
        self.state = None
        self.run = 0

    def update(self, decision: int) -> bool:
        """Feed one decision; returns True when the state flips."""
        if self.state is None:
            self.state = decision
            return False
        if decision == self.state:
            self.run = 0
            return False
        self.run += 1
        if self.run >= self.h:
            self.state, self.run = decision, 0
            return True
        return False


def apply_hysteresis(times, scores, threshold: float = 0.5, h: int = 3) -> DetectionTrace:
    """Build a trace from a precomputed score sequence."""
    times, scores = np.asarray(times, dtype=np.float64), np.asarray(scores, dtype=np.float64)
    stride = float(times[1] - times[0]) if len(times) > 1 else 0.0
    trace = DetectionTrace(window=0.0, stride=stride)
    hy = Hysteresis(h)
    for t, s in zip(times.tolist(), scores.tolist()):
        _record(trace, hy, t, s, threshold)
    return trace


def _record(trace: DetectionTrace, hy: Hysteresis, t: float, score: float, threshold: float) -> Emission:
    d = int(score >= threshold)
    if hy.update(d):
        trace.change_points.append((t, hy.state))
    e = Emission(t, score, d, hy.state)
    trace.emissions.append(e)
    return e


# -- window assembly --------------------------------------------------------------------
def end_index(t: float, hz: float) -> int:
    """Index of the newest sample timed at or before ``t``."""
    return int(math.floor(t * hz + _EPS))


def window_len(window: float, hz: float) -> int:
    n = window * hz
    if abs(n - round(n)) > 1e-6:
        raise ConfigError(f"a {window} s window is not a whole number of samples at {hz} Hz")
    return int(round(n))


def current_frame(frames, t: float):
    """Newest frame valid at ``t``, or None."""
    best = None
    for f in frames:
        if f.t <= t + _EPS:
            best = f
        else:
            break
    return best


def crop_at(frame, center_px, size: int, channels: int) -> np.ndarray:
    """``size`` square crop around ``center_px``, shifted to stay inside the frame."""
    h, w = frame.data.shape[:2]
    if size > h or size > w:
        raise ConfigError(f"{size} px crop does not fit a {h}x{w} scene frame")
    x0 = int(np.clip(int(np.floor(center_px[0] - frame.x0)) - size // 2, 0, w - size))
    y0 = int(np.clip(int(np.floor(center_px[1] - frame.y0)) - size // 2, 0, h - size))
    patch = frame.data[y0 : y0 + size, x0 : x0 + size]
    if patch.shape[2] == channels:
        return patch.copy()
    if patch.shape[2] == 1:
        return np.repeat(patch, channels, axis=2)
    raise DataError(f"scene frame has {patch.shape[2]} channels, model expects {channels}")


def window_clip(t, gaze, gaze_hz, imu, imu_hz, frame, cfg: DetectorConfig, model_cfg, cam: CameraModel) -> LabeledClip:
    """Package one window's samples (already sliced) as an unlabelled clip."""
    g = GazeWindow(gaze, gaze_hz, cfg.window, POINT3D) if gaze is not None else None
    i = ImuWindow(imu, imu_hz, cfg.window) if imu is not None else None
    rgb = None
    if frame is not None and "rgb" in model_cfg.modalities and gaze is not None:
        px = project_to_image(gaze[-1], cam)
        rgb = RgbPatch(crop_at(frame, px, crop_geometry(cfg.crop_fov_deg, cam), model_cfg.channels))
    return LabeledClip(f"t={t!r}", 0, _PLACEHOLDER, g, rgb, i)


def offline_windows(seq: AlternatingSequence, cfg: DetectorConfig, model_cfg, cam: CameraModel = CameraModel()):
    """Yield ``(t, clip)`` by slicing the full recordings."""
    ng, ni = window_len(cfg.window, seq.gaze_hz), window_len(cfg.window, seq.imu_hz)
    k = math.ceil(cfg.window / cfg.stride - _EPS)
    while True:
        t = k * cfg.stride
        eg, ei = end_index(t, seq.gaze_hz), end_index(t, seq.imu_hz)
        if eg >= len(seq.gaze) or ei >= len(seq.imu):
            return
        if eg + 1 >= ng and ei + 1 >= ni:
            gaze = seq.gaze[eg + 1 - ng : eg + 1]
            imu = seq.imu[ei + 1 - ni : ei + 1]
            yield t, window_clip(t, gaze, seq.gaze_hz, imu, seq.imu_hz, current_frame(seq.frames, t), cfg, model_cfg, cam)
        k += 1


def score_clip(model: Model, clip: LabeledClip) -> float:
    inputs = {m: np.asarray(a, dtype=model.dtype)[None] for m, a in clip_inputs(clip, model.cfg).items()}
    return float(model.predict(inputs).score[0])


def _check_model(model: Model, cfg: DetectorConfig, cam: CameraModel):
    if model.cfg.task != "binary":
        raise ConfigError("detection needs a binary reading head")
    if abs(cfg.window - model.cfg.duration) > _EPS:
        raise ConfigError(f"{cfg.window} s window does not match the model's {model.cfg.duration} s input")
    if "rgb" in model.cfg.modalities and crop_geometry(cfg.crop_fov_deg, cam) != model.cfg.patch:
        raise ConfigError(f"{cfg.crop_fov_deg} deg crop is not the model's {model.cfg.patch} px patch")


def detect_offline(seq: AlternatingSequence, model: Model, cfg: DetectorConfig = DetectorConfig(), cam: CameraModel = CameraModel()) -> DetectionTrace:
    _check_model(model, cfg, cam)
    if seq.duration < cfg.window:
        raise DataError(f"sequence lasts {seq.duration:.2f} s, shorter than the {cfg.window} s window")
    trace = DetectionTrace(cfg.window, cfg.stride)
    hy = Hysteresis(cfg.hysteresis)
    for t, clip in offline_windows(seq, cfg, model.cfg, cam):
        _record(trace, hy, t, score_clip(model, clip), cfg.threshold)
    return trace


# -- streaming ------------------------------------------------------------------------
class _Buffer:
    """Keeps the last ``n`` samples and checks that timestamps leave no gaps."""

    def __init__(self, name, n, hz):
        self.name, self.hz = name, hz
        self.data = deque(maxlen=n)
        self.count = 0
        self.last_t = None

    def push(self, t: float, sample):
        if self.last_t is not None:
            dt = t - self.last_t
            if dt > (1.0 + 1e-6) / self.hz:
                raise StreamGapError(f"{self.name} stream gap of {dt:.4f} s before t={t:.4f}", t)
            if dt <= 0:
                raise DataError(f"{self.name} timestamps must increase (t={t:.4f})")
        self.last_t = t
        self.data.append(np.asarray(sample, dtype=np.float64))
        self.count += 1

    def window(self) -> np.ndarray:
        return np.array(self.data)


class StreamingDetector:
    """Incremental detector: push samples as they arrive, collect emissions as windows complete."""

    def __init__(self, model: Model, cfg: DetectorConfig = DetectorConfig(), gaze_hz: float = 60, imu_hz: float = 60, cam: CameraModel = CameraModel()):
        _check_model(model, cfg, cam)
        self.model, self.cfg, self.cam = model, cfg, cam
        self.gaze = _Buffer("gaze", window_len(cfg.window, gaze_hz), gaze_hz)
        self.imu = _Buffer("imu", window_len(cfg.window, imu_hz), imu_hz)
        self.frames = []
        self.k = math.ceil(cfg.window / cfg.stride - _EPS)
        self.trace = DetectionTrace(cfg.window, cfg.stride)
        self._hy = Hysteresis(cfg.hysteresis)

    def push_gaze(self, t: float, point) -> list:
        self.gaze.push(t, point)
        return self.poll()

    def push_imu(self, t: float, sample) -> list:
        self.imu.push(t, sample)
        return self.poll()

    def add_frame(self, frame) -> None:
        if self.frames and frame.t < self.frames[-1].t:
            raise DataError("scene frames must arrive in time order")
        self.frames.append(frame)

    def poll(self) -> list:
        """Emit every window whose newest samples are exactly the buffers' tails."""
        out = []
        while True:
            t = self.k * self.cfg.stride
            g, i = self.gaze, self.imu
            eg, ei = end_index(t, g.hz), end_index(t, i.hz)
            if g.count < eg + 1 or i.count < ei + 1:
                return out
            if g.count > eg + 1 or i.count > ei + 1:
                # one stream ran ahead past this emission; its window is gone
                raise DataError(f"streams are out of step at t={t:.4f}; interleave samples by time")
            clip = window_clip(
                t, g.window(), g.hz, i.window(), i.hz, current_frame(self.frames, t), self.cfg, self.model.cfg, self.cam
            )
            out.append(_record(self.trace, self._hy, t, score_clip(self.model, clip), self.cfg.threshold))
            self.k += 1


def stream_sequence(seq: AlternatingSequence, model: Model, cfg: DetectorConfig = DetectorConfig(), cam: CameraModel = CameraModel()) -> DetectionTrace:
    """Replay a recording sample by sample through a StreamingDetector."""
    if seq.duration < cfg.window:
        raise DataError(f"sequence lasts {seq.duration:.2f} s, shorter than the {cfg.window} s window")
    det = StreamingDetector(model, cfg, seq.gaze_hz, seq.imu_hz, cam)
    events = [(i / seq.gaze_hz, 0, i) for i in range(len(seq.gaze))]
    events += [(i / seq.imu_hz, 1, i) for i in range(len(seq.imu))]
    frames = iter(seq.frames)
    pending = next(frames, None)
    for t, kind, i in sorted(events):
        while pending is not None and pending.t <= t + _EPS:
            det.add_frame(pending)
            pending = next(frames, None)
        if kind == 0:
            det.push_gaze(t, seq.gaze[i])
        else:
            det.push_imu(t, seq.imu[i])
    return det.trace


def detect(seq: AlternatingSequence, model: Model, cfg: DetectorConfig = DetectorConfig(), streaming: bool = True) -> DetectionTrace:
    return stream_sequence(seq, model, cfg) if streaming else detect_offline(seq, model, cfg)


# -- latency and accuracy ---------------------------------------------------------------
@dataclass
class LatencyReport:
    latencies: list  # per ground-truth change; None for a miss
    matched: list  # detected change time per ground-truth change, or None
    misses: int
    false_alarms: int

    @property
    def mean(self) -> float | None:
        hits = [x for x in self.latencies if x is not None]
        return float(np.mean(hits)) if hits else None

    def to_dict(self) -> dict:
        return {
            "latencies": self.latencies,
            "matched_at": self.matched,
            "mean_latency": self.mean,
            "n_changes": len(self.latencies),
            "misses": self.misses,
            "false_alarms": self.false_alarms,
        }


def latency(detected, ground_truth, max_match: float = 5.0) -> LatencyReport:
    """Greedily match each true change, in time order, to the first unused
    detected change of the same polarity within ``[t, t + max_match]``."""
    detected = detected.change_points if isinstance(detected, DetectionTrace) else list(detected)
    used = [False] * len(detected)
    lat, matched = [], []
    for tg, sg in sorted(ground_truth):
        hit = None
        for j, (td, sd) in enumerate(detected):
            if not used[j] and sd == sg and tg - _EPS <= td <= tg + max_match + _EPS:
                hit = j
                break
        if hit is None:
            lat.append(None)
            matched.append(None)
        else:
            used[hit] = True
            lat.append(max(detected[hit][0] - tg, 0.0))
            matched.append(detected[hit][0])
    misses = sum(x is None for x in lat)
    return LatencyReport(lat, matched, misses, used.count(False))


def windowed_accuracy(trace: DetectionTrace, ground_truth, initial_state: int, window: float | None = None) -> dict:
    """Accuracy and F1 of emitted states, skipping windows that contain a true change."""
    T = trace.window if window is None else window
    changes = sorted(ground_truth)
    truth, pred, excluded = [], [], 0
    for e in trace.emissions:
        if any(e.t - T < tc <= e.t + _EPS for tc, _ in changes):
            excluded += 1
            continue
        state = initial_state
        for tc, s in changes:
            if tc <= e.t + _EPS:
                state = s
        truth.append(state)
        pred.append(e.state)
    truth, pred = np.array(truth, dtype=np.int64), np.array(pred, dtype=np.int64)
    n = len(truth)
    tp = int(np.sum((pred == 1) & (truth == 1)))
    prec = tp / max(int(pred.sum()), 1)
    rec = tp / max(int(truth.sum()), 1)
    return {
        "accuracy": float(np.mean(pred == truth)) if n else 0.0,
        "f1": 2 * prec * rec / (prec + rec) if prec + rec else 0.0,
        "n": n,
        "excluded": excluded,
    }


def write_latency_json(path, report: LatencyReport, extra: dict | None = None) -> None:
    obj = {**report.to_dict(), **(extra or {})}
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
