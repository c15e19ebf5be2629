"""Continuous recordings that switch between reading and other activities.

Ten templates cover everyday interruptions of reading such as getting up,
mind wandering or looking at pictures.  Each template is a list of segments; segment
lengths are jittered per seed and snapped to the gaze sample grid so the
ground-truth change points are exact sample times.
"""

from __future__ import annotations

import numpy as np

from ..data import AlternatingSequence, ScenarioSpec, SceneFrame
from ..errors import ConfigError
from ..geometry import CameraModel
from ..rng import child_seed, stream
from .config import DEFAULT_SIM, SimConfig
from .imu import gen_imu
from .patch import render_texture, texture_kind, to_uint8
from .scanpath import gen_scanpath

R, N = "reading", "not_reading"


def _r(medium="print", mode="engaged"):
    return {"label": R, "mode": mode, "medium": medium, "weight": 1.0}


def _n(pattern=None, motion=None, activity="daily", weight=0.7, scene=None):
    return {"label": N, "pattern": pattern, "motion": motion, "activity": activity, "weight": weight, "scene": scene}


SCENARIOS = {
    1: ("reading + other activities (getting up)", [_r(), _n("random_saccades", "walking"), _r()]),
    2: ("reading + mind wandering", [_r(), _n("long_fixation", "stationary"), _r()]),
    3: ("reading text + looking at images", [_r(), _n("clusters", "stationary", scene="blobs"), _r()]),
    4: ("reading + small physical activity", [_r("digital"), _n("random_saccades", "active"), _r("digital")]),
    5: (
        "reading + eating/drinking",
        [_r(), _n("inspect", "head_turns", weight=0.35), _r(), _n("inspect", "head_turns", weight=0.35), _r()],
    ),
    6: ("walking + stopping at a text", [_n("random_saccades", "walking"), _r("objects"), _n("pursuit", "walking"), _r("objects")]),
    7: ("walking + grab something to read", [_n("random_saccades", "walking"), _r("print"), _n("pursuit", "walking"), _r("digital")]),
    8: ("cleaning + reading", [_n("random_saccades", "active"), _r("print"), _n("inspect", "active"), _r("print")]),
    9: (
        "cooking while reading",
        [_r("digital"), _n("inspect", "active"), _r("digital"), _n("random_saccades", "active"), _r("digital"), _n("inspect", "active")],
    ),
    10: (
        "assembly while reading",
        [_n("inspect", "active"), _r("print"), _n("inspect", "stationary"), _r("print"), _n("inspect", "active"), _r("print")],
    ),
}

MIN_SEGMENT_S = 3.0


def segment_bounds(weights, total_s: float, hz: float, rng) -> list[tuple[int, int]]:
    """Sample-index bounds of each segment; they tile ``[0, round(total_s*hz))``."""
    w = np.asarray(weights, dtype=float) * rng.uniform(0.75, 1.25, len(weights))
    n_total = int(round(total_s * hz))
    edges = np.round(np.cumsum(w) / w.sum() * n_total).astype(int)
    edges[-1] = n_total
    starts = np.concatenate([[0], edges[:-1]])
    return list(zip(starts.tolist(), edges.tolist()))


def gen_alternating(
    scenario_id: int,
    total_s: float = 60.0,
    seed: int = 0,
    gaze_hz: float = 60,
    imu_hz: float = 60,
    sim: SimConfig = DEFAULT_SIM,
    cam: CameraModel = CameraModel(),
) -> AlternatingSequence:
    if scenario_id not in SCENARIOS:
        raise ConfigError(f"scenario id must be 1..{len(SCENARIOS)}")
    if gaze_hz != imu_hz:
        raise ConfigError("alternating sequences use one clock for gaze and IMU")
    _, template = SCENARIOS[scenario_id]
    if total_s < MIN_SEGMENT_S * len(template):
        raise ConfigError(f"scenario {scenario_id} needs at least {MIN_SEGMENT_S * len(template)} s")
    rng = stream(seed, "alternating", scenario_id)
    bounds = segment_bounds([s["weight"] for s in template], total_s, gaze_hz, rng)

    gaze_parts, imu_parts, frames, segments, change_points = [], [], [], [], []
    state = None
    for i, (seg, (a, b)) in enumerate(zip(template, bounds)):
        seg_seed = child_seed(seed, "segment", scenario_id, i)
        if seg["label"] == R:
            spec = ScenarioSpec(R, seg["mode"], seg["medium"], seed=seg_seed, scenario=f"alternating-{scenario_id}")
        else:
            spec = ScenarioSpec(
                N, "none", "none", activity=seg["activity"], seed=seg_seed,
                pattern=seg["pattern"], motion=seg["motion"], scenario=f"alternating-{scenario_id}",
            )
        n = b - a
        T = n / gaze_hz
        gaze_parts.append(gen_scanpath(spec, gaze_hz, T, sim).samples)
        imu_parts.append(gen_imu(spec, imu_hz, T, sim).samples)
        t0, t1 = a / gaze_hz, b / gaze_hz
        segments.append((t0, t1, spec))
        frames.append(_scene_frame(spec, t0, seg.get("scene"), sim, cam))
        s = int(spec.is_reading)
        if state is not None and s != state:
            change_points.append((t0, s))
        state = s
    initial = int(segments[0][2].is_reading)
    return AlternatingSequence(
        scenario_id=scenario_id,
        gaze=np.concatenate(gaze_parts),
        gaze_hz=gaze_hz,
        imu=np.concatenate(imu_parts),
        imu_hz=imu_hz,
        frames=frames,
        change_points=change_points,
        initial_state=initial,
        segments=segments,
        id=f"alt-{scenario_id:02d}-{seed}",
    )


def _scene_frame(spec: ScenarioSpec, t0: float, scene, sim: SimConfig, cam: CameraModel) -> SceneFrame:
    rng = stream(spec.seed, "scene")
    kind, medium = texture_kind(spec, rng, sim)
    if scene is not None:
        kind = scene
    S = sim.scene_px
    img = render_texture(kind, S, S, rng, medium, sim)
    x0 = int(cam.width // 2 - S // 2)
    y0 = int(cam.height // 2 - S // 2)
    return SceneFrame(t0, x0, y0, to_uint8(img, 1))
