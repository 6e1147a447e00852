"""Windowed speed estimation and the four-action rule classifier."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .posekin import upper_body_orientation

DEFAULT_WINDOW_S = 3.0
SMOOTH_HALF_WIDTH = 2
MIN_SAMPLES = 3
MIN_SPAN_FRACTION = 0.5
MPS_TO_KMH = 3.6


class ActionLabel(Enum):
    STANDING = "Standing"
    WALKING = "Walking"
    RUNNING = "Running"
    LYING = "Lying"
    UNKNOWN = "Unknown"

    @property
    def code(self) -> str:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "ActionLabel":
        try:
            return _FROM_CODE[code]
        except KeyError:
            raise InputError(f"unknown action code {code!r}") from None


_CODES = {
    ActionLabel.STANDING: "ST",
    ActionLabel.WALKING: "WA",
    ActionLabel.RUNNING: "RU",
    ActionLabel.LYING: "LY",
    ActionLabel.UNKNOWN: "UN",
}
_FROM_CODE = {v: k for k, v in _CODES.items()}
ACTION_ORDER = tuple(ActionLabel)  # row/column order of confusion matrices


@dataclass(frozen=True)
class RuleThresholds:
    run_kmh: float = 7.0
    walk_kmh: float = 1.0
    vertical_lo_deg: float = 65.0
    vertical_hi_deg: float = 115.0

    def __post_init__(self):
        if not 0 < self.walk_kmh < self.run_kmh:
            raise InputError("need 0 < walk_kmh < run_kmh")
        if not 0 < self.vertical_lo_deg < self.vertical_hi_deg < 180:
            raise InputError("need 0 < vertical_lo_deg < vertical_hi_deg < 180")


@dataclass(frozen=True)
class MotionMeasures:
    speed_kmh: Optional[float] = None
    orientation_deg: Optional[float] = None
    window_s: float = DEFAULT_WINDOW_S


def _smoothed(times, pts, i):
    lo, hi = max(0, i - SMOOTH_HALF_WIDTH), min(len(times), i + SMOOTH_HALF_WIDTH + 1)
    return float(np.median(times[lo:hi])), np.median(pts[lo:hi], axis=0)


def estimate_speed(track: Sequence, window_s: float = DEFAULT_WINDOW_S):
    """Speed in km/h over the last ``window_s`` seconds of a ``(t, point)`` track.

    The two window endpoints are median-smoothed over their +-2 neighbours
    inside the window (timestamps with the same window as the positions, so
    uniformly sampled straight-line motion is reproduced exactly) and the speed
    is their displacement divided by elapsed time. Returns ``None`` when the
    window holds fewer than 3 samples or spans less than half of ``window_s``.
    """
    if len(track) < MIN_SAMPLES:
        return None
    t_last = track[-1][0]
    start = bisect.bisect_left(track, t_last - window_s - 1e-9, key=lambda s: s[0])
    recent = track[start:]
    if len(recent) < MIN_SAMPLES or t_last - recent[0][0] < MIN_SPAN_FRACTION * window_s:
        return None
    times = np.array([s[0] for s in recent], dtype=float)
    pts = np.array([s[1] for s in recent], dtype=float)
    t0, p0 = _smoothed(times, pts, 0)
    t1, p1 = _smoothed(times, pts, len(times) - 1)
    if t1 <= t0:
        return None
    return float(np.linalg.norm(p1 - p0) / (t1 - t0) * MPS_TO_KMH)


def classify(measures: MotionMeasures, thr: RuleThresholds = RuleThresholds()) -> ActionLabel:
    speed = measures.speed_kmh
    if speed is None or not math.isfinite(speed):
        return ActionLabel.UNKNOWN
    if speed > thr.run_kmh:
        return ActionLabel.RUNNING
    if speed > thr.walk_kmh:
        return ActionLabel.WALKING
    angle = measures.orientation_deg
    if angle is None:
        return ActionLabel.UNKNOWN
    if thr.vertical_lo_deg <= angle <= thr.vertical_hi_deg:
        return ActionLabel.STANDING
    return ActionLabel.LYING


def update_actions(
    objects,
    clock: float,
    thr: RuleThresholds = RuleThresholds(),
    window_s: float = DEFAULT_WINDOW_S,
    pose_cadence_s: float = 1.0,
):
    """Refresh ``latest_measures``/``latest_action`` on every active human.

    Skeletons older than two pose-lane periods are ignored.
    """
    max_age = 2.0 * pose_cadence_s
    for obj in objects:
        if obj.state != "active":
            continue
        if obj.class_label != "human":
            obj.latest_action = None
            obj.latest_measures = None
            continue
        speed = estimate_speed(obj.ground_track, window_s)
        orientation = None
        skel = obj.latest_skeleton
        if skel is not None and clock - skel.timestamp < max_age:
            orientation = upper_body_orientation(skel)
        obj.latest_measures = MotionMeasures(speed, orientation, window_s)
        obj.latest_action = classify(obj.latest_measures, thr)
    return objects
