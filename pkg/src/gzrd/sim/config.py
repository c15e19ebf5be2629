"""Every tunable of the synthetic sensor model lives in :class:`SimConfig`.

Values are oculomotor ballpark figures picked so the pipeline has something
realistic-looking to chew on; nothing here is a physiological claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def _fixation_ms():
    # (mean, sd) of fixation duration per reading mode
    return {
        "engaged": (230.0, 50.0),
        "skim": (185.0, 40.0),
        "scan": (260.0, 80.0),
        "out_loud": (230.0 * 1.3, 60.0),
        "walk_read": (240.0, 50.0),
        "write_read": (230.0, 50.0),
    }


def _saccade_deg():
    # (mean, sd) of forward saccade amplitude per reading mode
    return {
        "engaged": (2.0, 0.4),
        "skim": (4.5, 1.2),
        "scan": (2.5, 0.8),
        "out_loud": (1.8, 0.35),
        "walk_read": (2.0, 0.5),
        "write_read": (2.0, 0.4),
    }


def _line_len_deg():
    return {"print": (14.0, 24.0), "digital": (8.0, 14.0), "objects": (3.0, 7.0)}


def _line_spacing_deg():
    return {"print": 0.9, "digital": 1.3, "objects": 2.2}


def _depth_m():
    return {"print": (0.35, 0.5), "digital": (0.28, 0.6), "objects": (0.6, 1.5)}


def _line_pitch_px():
    # text line pitch in a 5-degree (64 px) crop
    return {"print": (6.0, 8.0), "digital": (9.0, 12.0), "objects": (13.0, 20.0)}


@dataclass(frozen=True)
class SimConfig:
    tremor_sigma_m: float = 0.0015
    burn_in_s: float = 1.0
    fixation_ms: dict = field(default_factory=_fixation_ms)
    fixation_min_ms: float = 80.0
    saccade_deg: dict = field(default_factory=_saccade_deg)
    line_len_deg: dict = field(default_factory=_line_len_deg)
    line_spacing_deg: dict = field(default_factory=_line_spacing_deg)
    lines_per_page: int = 12
    depth_m: dict = field(default_factory=_depth_m)
    return_undershoot_deg: float = 0.8
    walk_step_hz: tuple = (1.8, 2.2)
    walk_vor_deg: tuple = (0.3, 0.4)  # horizontal, vertical compensation amplitude
    glance_every_s: tuple = (1.5, 3.0)
    line_pitch_px: dict = field(default_factory=_line_pitch_px)
    faint_text_prob: float = 0.1
    scene_px: int = 512

    def replace(self, **kw) -> "SimConfig":
        from dataclasses import replace

        return replace(self, **kw)


DEFAULT_SIM = SimConfig()
