"""Per-frame tracking loop: flow-based prediction, IOU/Hungarian matching and
object lifecycle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from .actionrules import ActionLabel, MotionMeasures
from .assignment import hungarian_assign
from .errors import InputError, SequencingError
from .posekin import Skeleton2D


class ObjectClass(str, Enum):
    HUMAN = "human"
    CAR = "car"
    OTHER = "other"

    @classmethod
    def parse(cls, name: str) -> "ObjectClass":
        try:
            return cls(name.lower())
        except ValueError:
            return cls.OTHER


class TrackState(str, Enum):
    ACTIVE = "active"
    LOST = "lost"


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InputError(f"bbox size must be positive, got {self.w}x{self.h}")

    @property
    def center(self):
        return (self.x + 0.5 * self.w, self.y + 0.5 * self.h)

    @property
    def bottom_center(self):
        return (self.x + 0.5 * self.w, self.y + self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    class_label: ObjectClass
    confidence: float
    frame_index: int

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class MotionField:
    """Dense displacement field at reduced resolution.

    ``vectors[row, col] = (du, dv)`` in field pixels; field pixel ``(row, col)``
    covers frame pixels ``[col*s, (col+1)*s) x [row*s, (row+1)*s)``.
    """

    vectors: np.ndarray  # (height, width, 2) float32/64
    scale: float = 1.0

    def __post_init__(self):
        vec = np.asarray(self.vectors)
        if vec.ndim != 3 or vec.shape[2] != 2 or vec.shape[0] == 0 or vec.shape[1] == 0:
            raise InputError(f"motion field must have shape (h, w, 2) with h, w > 0, got {vec.shape}")
        if self.scale < 1:
            raise InputError(f"motion field scale must be >= 1, got {self.scale}")
        object.__setattr__(self, "vectors", vec)

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def zeros(cls, frame_width: int, frame_height: int, scale: float = 1.0) -> "MotionField":
        w = max(1, math.ceil(frame_width / scale))
        h = max(1, math.ceil(frame_height / scale))
        return cls(np.zeros((h, w, 2), dtype=np.float32), scale)

    def window(self, bbox: BBox):
        """Field (row, col) slices whose pixel centers fall inside ``bbox``.

        A box smaller than one field pixel falls back to the pixel under its
        center. Returns ``None`` when the box lies outside the field.
        """
        s = self.scale
        c0 = math.ceil(bbox.x / s - 0.5)
        c1 = math.ceil((bbox.x + bbox.w) / s - 0.5)  # exclusive
        r0 = math.ceil(bbox.y / s - 0.5)
        r1 = math.ceil((bbox.y + bbox.h) / s - 0.5)
        if c1 <= c0:
            c0 = math.floor((bbox.x + 0.5 * bbox.w) / s)
            c1 = c0 + 1
        if r1 <= r0:
            r0 = math.floor((bbox.y + 0.5 * bbox.h) / s)
            r1 = r0 + 1
        c0, c1 = max(c0, 0), min(c1, self.width)
        r0, r1 = max(r0, 0), min(r1, self.height)
        if c0 >= c1 or r0 >= r1:
            return None
        return slice(r0, r1), slice(c0, c1)


@dataclass
class SceneObject:
    id: int
    bbox: BBox
    class_label: ObjectClass
    state: TrackState = TrackState.ACTIVE
    age_frames: int = 0
    frames_since_matched: int = 0
    ground_track: list = field(default_factory=list)  # [(t, np.ndarray(3))]
    latest_skeleton: Optional[Skeleton2D] = None
    latest_measures: Optional[MotionMeasures] = None
    latest_action: Optional[ActionLabel] = None
    first_seen_s: Optional[float] = None

    @property
    def ground_position(self):
        return self.ground_track[-1][1] if self.ground_track else None


@dataclass(frozen=True)
class TrackerParams:
    iou_accept_threshold: float = 0.3
    min_confidence: float = 0.4
    lost_grace_frames: int = 5

    def __post_init__(self):
        if not 0.0 <= self.iou_accept_threshold <= 1.0:
            raise InputError("iou_accept_threshold must be in [0, 1]")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise InputError("min_confidence must be in [0, 1]")
        if self.lost_grace_frames < 0:
            raise InputError("lost_grace_frames must be >= 0")


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def predict(objects: Sequence[SceneObject], flow: MotionField) -> List[BBox]:
    """Shift each object's bbox by the component-wise median flow inside it."""
    out = []
    for obj in objects:
        win = flow.window(obj.bbox)
        if obj.state != TrackState.ACTIVE or win is None:
            out.append(obj.bbox)
            continue
        patch = flow.vectors[win].reshape(-1, 2)
        du, dv = np.median(patch, axis=0) * flow.scale
        out.append(obj.bbox.shifted(float(du), float(dv)))
    return out


def match_and_update(
    objects: List[SceneObject],
    predicted: Sequence[BBox],
    detections: Sequence[Detection],
    params: TrackerParams,
    frame_index: int,
    next_id: Optional[int] = None,
) -> List[SceneObject]:
    """Match active objects (at their predicted boxes) against detections.

    ``predicted`` is parallel to the *active* objects in ``objects``. Matched
    objects take the detection box; unmatched ones coast on the predicted box
    and are flagged lost once they go unmatched for more than
    ``lost_grace_frames`` frames; unmatched detections become new objects with
    consecutive ids starting at ``next_id`` (default: one past the largest id).
    """
    active = [o for o in objects if o.state == TrackState.ACTIVE]
    if len(predicted) != len(active):
        raise InputError(f"{len(predicted)} predictions for {len(active)} active objects")

    matched_obj, matched_det = {}, set()
    if active and detections:
        scores = np.zeros((len(active), len(detections)))
        for i, (obj, box) in enumerate(zip(active, predicted)):
            for j, det in enumerate(detections):
                if det.class_label == obj.class_label:
                    scores[i, j] = iou(box, det.bbox)
        for i, j in hungarian_assign(1.0 - scores):
            if scores[i, j] >= params.iou_accept_threshold and scores[i, j] > 0.0:
                matched_obj[i] = j
                matched_det.add(j)

    for i, obj in enumerate(active):
        obj.age_frames += 1
        if i in matched_obj:
            obj.bbox = detections[matched_obj[i]].bbox
            obj.frames_since_matched = 0
        else:
            obj.bbox = predicted[i]
            obj.frames_since_matched += 1
            if obj.frames_since_matched > params.lost_grace_frames:
                obj.state = TrackState.LOST

    if next_id is None:
        next_id = max((o.id for o in objects), default=0) + 1
    for j, det in enumerate(detections):
        if j in matched_det:
            continue
        objects.append(SceneObject(id=next_id, bbox=det.bbox, class_label=det.class_label, age_frames=1))
        next_id += 1
    return objects


@dataclass(frozen=True)
class ObjectSnapshot:
    id: int
    class_label: ObjectClass
    bbox: BBox
    ground: Optional[tuple]
    action: Optional[ActionLabel]
    speed_kmh: Optional[float]
    orientation_deg: Optional[float]


@dataclass(frozen=True)
class TrackerOutput:
    frame_index: int
    timestamp_s: float
    objects: tuple  # ObjectSnapshot, sorted by id


GroundLocator = Callable[[tuple], Optional[np.ndarray]]


class Tracker:
    """Tracking state for one camera stream.

    ``ground_locator(pixel) -> world point or None`` turns a bbox anchor
    pixel into a ground position; without one no ground tracks are kept.
    """

    def __init__(self, params: TrackerParams = TrackerParams(), ground_locator: Optional[GroundLocator] = None):
        self.params = params
        self.ground_locator = ground_locator
        self.objects: List[SceneObject] = []
        self.next_id = 1
        self.last_frame_index: Optional[int] = None
        self.last_timestamp: Optional[float] = None

    @property
    def active(self) -> List[SceneObject]:
        return [o for o in self.objects if o.state == TrackState.ACTIVE]

    def step(self, frame_index: int, timestamp_s: float, detections: Sequence[Detection], flow: Optional[MotionField]) -> TrackerOutput:
        """Predict, match, update and localize for one frame.

        ``detections`` should already be class/confidence filtered. ``flow`` is
        the field from the previous frame to this one (``None`` = no motion).
        """
        if self.last_frame_index is not None and frame_index <= self.last_frame_index:
            raise SequencingError(f"frame index went from {self.last_frame_index} to {frame_index}")
        if self.last_timestamp is not None and timestamp_s <= self.last_timestamp:
            raise SequencingError(f"timestamp went from {self.last_timestamp} to {timestamp_s}")
        self.last_frame_index = frame_index
        self.last_timestamp = timestamp_s

        active = self.active
        predicted = predict(active, flow) if flow is not None else [o.bbox for o in active]
        n_before = len(self.objects)
        match_and_update(self.objects, predicted, detections, self.params, frame_index, next_id=self.next_id)
        for obj in self.objects[n_before:]:
            obj.first_seen_s = timestamp_s
        self.next_id += len(self.objects) - n_before

        if self.ground_locator is not None:
            for obj in self.active:
                if obj.class_label != ObjectClass.HUMAN:
                    continue
                hit = self.ground_locator(obj.bbox.bottom_center)
                if hit is not None:
                    obj.ground_track.append((timestamp_s, np.asarray(hit, dtype=float)))
        return self.snapshot()

    def snapshot(self) -> TrackerOutput:
        snaps = []
        for obj in sorted(self.active, key=lambda o: o.id):
            m = obj.latest_measures
            g = obj.ground_position
            snaps.append(
                ObjectSnapshot(
                    id=obj.id,
                    class_label=obj.class_label,
                    bbox=obj.bbox,
                    ground=None if g is None or obj.ground_track[-1][0] != self.last_timestamp else tuple(g),
                    action=obj.latest_action,
                    speed_kmh=None if m is None else m.speed_kmh,
                    orientation_deg=None if m is None else m.orientation_deg,
                )
            )
        return TrackerOutput(self.last_frame_index, self.last_timestamp, tuple(snaps))
