"""17-joint skeletons, the upper-body orientation measure, and the
reduced-rate pose lane."""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError

N_JOINTS = 17

# Human3.6M 17-joint layout.
JOINT_NAMES = (
    "pelvis",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
PELVIS = JOINT_INDEX["pelvis"]
SPINE = JOINT_INDEX["spine"]
THORAX = JOINT_INDEX["thorax"]

MIN_TORSO_PX = 1e-6
DEFAULT_BATCH_SIZE = 4
DEFAULT_POSE_CADENCE_S = 1.0


@dataclass(frozen=True)
class Skeleton2D:
    joints: np.ndarray  # (17, 2) image pixels
    valid: np.ndarray  # (17,) bool
    timestamp: float

    def __post_init__(self):
        joints = np.array(self.joints, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if joints.shape != (N_JOINTS, 2) or valid.shape != (N_JOINTS,):
            raise InputError(f"a skeleton needs exactly {N_JOINTS} joints, got {joints.shape[0]}")
        if not np.all(np.isfinite(joints[valid])):
            raise InputError("valid joints must have finite coordinates")
        joints.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "valid", valid)


@dataclass(frozen=True)
class PoseRequest:
    object_id: int
    crop: tuple  # (x, y, w, h) pixels
    frame_index: int


@dataclass(frozen=True)
class PoseResult:
    object_id: int
    skeleton: Skeleton2D


def upper_body_orientation(skel: Skeleton2D):
    """Angle in degrees between the pelvis->thorax vector and the image x axis.

    90 means a vertical torso (upright, whether head up or down in the image),
    0 or 180 a horizontal one. Returns ``None`` when the pelvis, spine or thorax
    joint is missing or the torso is shorter than a micro-pixel.
    """
    if not (skel.valid[PELVIS] and skel.valid[SPINE] and skel.valid[THORAX]):
        return None
    # (spine - pelvis) + (thorax - spine)
    vx, vy = skel.joints[THORAX] - skel.joints[PELVIS]
    norm = math.hypot(vx, vy)
    if not norm >= MIN_TORSO_PX:
        return None
    return math.degrees(math.acos(max(-1.0, min(1.0, vx / norm))))


def batch_requests(pending: Sequence[PoseRequest], batch_size: int = DEFAULT_BATCH_SIZE):
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    return [list(pending[i : i + batch_size]) for i in range(0, len(pending), batch_size)]


def attach_pose(objects, result: PoseResult):
    """Store the result's skeleton on the active object it names.

    Results for unknown or lost objects are dropped, and a stored skeleton is
    never replaced by an older one.
    """
    for obj in objects:
        if obj.id != result.object_id:
            continue
        if obj.state != "active":
            break
        current = obj.latest_skeleton
        if current is None or result.skeleton.timestamp >= current.timestamp:
            obj.latest_skeleton = result.skeleton
        break
    return objects


def associate_pose(hint, skeleton: Skeleton2D, objects, gate_px: float):
    """PoseResult for the active human whose bbox center is nearest to
    ``hint`` (within ``gate_px``), or ``None``. Ties go to the lower id."""
    best, best_d = None, gate_px
    hx, hy = hint
    for obj in objects:
        if obj.state != "active" or obj.class_label != "human":
            continue
        cx, cy = obj.bbox.center
        d = math.hypot(cx - hx, cy - hy)
        if d < best_d or (d == best_d and best is not None and obj.id < best.id):
            best, best_d = obj, d
    return None if best is None else PoseResult(best.id, skeleton)


class PoseLane:
    """Asynchronous pose worker.

    The tracker thread calls :meth:`submit` with crop requests at the lane
    cadence; a background thread runs ``estimator`` on batches of requests and
    queues the results. :meth:`drain` returns whatever has finished so far and
    is meant to be called at frame boundaries, feeding :func:`attach_pose`.

    ``estimator(batch) -> list[PoseResult | None]`` receives a list of
    :class:`PoseRequest` no longer than ``batch_size``.
    """

    def __init__(self, estimator: Callable, batch_size: int = DEFAULT_BATCH_SIZE, cadence_s: float = DEFAULT_POSE_CADENCE_S):
        self.estimator = estimator
        self.batch_size = batch_size
        self.cadence_s = cadence_s
        self._last_sweep = None
        self._requests: queue.Queue = queue.Queue()
        self._results: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._work, name="pose-lane", daemon=True)
        self._thread.start()

    def due(self, timestamp: float) -> bool:
        return self._last_sweep is None or timestamp - self._last_sweep >= self.cadence_s - 1e-9

    def submit(self, requests: Iterable[PoseRequest], timestamp: float) -> None:
        self._last_sweep = timestamp
        for batch in batch_requests(list(requests), self.batch_size):
            self._requests.put(batch)

    def drain(self) -> list:
        out = []
        while True:
            try:
                out.append(self._results.get_nowait())
            except queue.Empty:
                return out

    def join(self, timeout: float | None = None) -> None:
        """Block until every submitted batch has been processed."""
        if timeout is None:
            self._requests.join()
        else:
            _join_with_timeout(self._requests, timeout)

    def close(self) -> None:
        self._requests.put(None)
        self._thread.join()

    def _work(self):
        while True:
            batch = self._requests.get()
            try:
                if batch is None:
                    return
                for res in self.estimator(batch):
                    if res is not None:
                        self._results.put(res)
            finally:
                self._requests.task_done()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _join_with_timeout(q: queue.Queue, timeout: float) -> None:
    with q.all_tasks_done:
        q.all_tasks_done.wait_for(lambda: q.unfinished_tasks == 0, timeout=timeout)
