"""Streaming pipeline: frames, detections, flow and poses in; per-frame
output records out."""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, TextIO

from .actionrules import DEFAULT_WINDOW_S, RuleThresholds, update_actions
from .errors import InputError, ParseError, SequencingError
from .geom3d import backproject_to_ground
from .geom3d.io import read_calibration, read_ground_model
from .ingest import filter_classes, parse_detection_stream, parse_flow_stream, parse_frame_stream, parse_pose_stream
from .posekin import attach_pose, associate_pose
from .records import OUTPUT_HEADER, OutputRecord, frames_line
from .trackcore import Tracker, TrackerOutput, TrackerParams

DEFAULT_POSE_GATE_PX = 40.0


@dataclass(frozen=True)
class RunConfig:
    calibration: Path
    ground: Path
    frames: Path
    detections: Path
    poses: Optional[Path]
    flow: Path
    tracks: Path
    tracker: TrackerParams = TrackerParams()
    thresholds: RuleThresholds = RuleThresholds()
    pose_cadence_s: float = 1.0
    window_s: float = DEFAULT_WINDOW_S
    pose_gate_px: float = DEFAULT_POSE_GATE_PX

    def __post_init__(self):
        if self.pose_cadence_s <= 0 or self.window_s <= 0 or self.pose_gate_px <= 0:
            raise InputError("pose_cadence_s, window_s and pose_gate_px must be positive")
        for name in ("calibration", "ground", "frames", "detections", "flow"):
            if not getattr(self, name).exists():
                raise InputError(f"{name} input not found: {getattr(self, name)}")
        if self.poses is not None and not self.poses.exists():
            raise InputError(f"poses input not found: {self.poses}")


def load_run_config(path, output_dir=None) -> RunConfig:
    """Read an INI run config; relative paths resolve against its directory.

    ``output_dir`` overrides the directory of the output tracks file.
    """
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        if not cp.read(path, encoding="utf-8"):
            raise InputError(f"cannot read run config {path}")
    except configparser.Error as exc:
        raise InputError(f"run config {path}: {exc}") from None
    base = path.parent

    def p(section, key, required=True):
        value = cp.get(section, key, fallback=None)
        if value is None:
            if required:
                raise InputError(f"run config {path}: missing [{section}] {key}")
            return None
        return base / value

    try:
        tracks = Path(cp.get("output", "tracks", fallback="tracks.txt"))
        tracks = Path(output_dir) / tracks.name if output_dir is not None else base / tracks
        tr = cp["tracker"] if cp.has_section("tracker") else {}
        ac = cp["actions"] if cp.has_section("actions") else {}
        tracker = TrackerParams(
            iou_accept_threshold=float(tr.get("iou_accept_threshold", 0.3)),
            min_confidence=float(tr.get("min_confidence", 0.4)),
            lost_grace_frames=int(tr.get("lost_grace_frames", 5)),
        )
        thresholds = RuleThresholds(
            run_kmh=float(ac.get("run_kmh", 7.0)),
            walk_kmh=float(ac.get("walk_kmh", 1.0)),
            vertical_lo_deg=float(ac.get("vertical_lo_deg", 65.0)),
            vertical_hi_deg=float(ac.get("vertical_hi_deg", 115.0)),
        )
        return RunConfig(
            calibration=p("inputs", "calibration"),
            ground=p("inputs", "ground"),
            frames=p("inputs", "frames"),
            detections=p("inputs", "detections"),
            poses=p("inputs", "poses", required=False),
            flow=p("inputs", "flow"),
            tracks=tracks,
            tracker=tracker,
            thresholds=thresholds,
            pose_cadence_s=float(ac.get("pose_cadence_s", 1.0)),
            window_s=float(ac.get("window_s", DEFAULT_WINDOW_S)),
            pose_gate_px=float(ac.get("pose_gate_px", DEFAULT_POSE_GATE_PX)),
        )
    except ValueError as exc:
        raise InputError(f"run config {path}: {exc}") from None


def records_of(out: TrackerOutput):
    for s in out.objects:
        yield OutputRecord(
            frame_index=out.frame_index,
            timestamp_s=out.timestamp_s,
            person_id=s.id,
            class_label=s.class_label.value,
            action=None if s.action is None else s.action.code,
            speed_kmh=s.speed_kmh,
            orientation_deg=s.orientation_deg,
            bbox=(s.bbox.x, s.bbox.y, s.bbox.w, s.bbox.h),
            ground=s.ground,
        )


class _Grouped:
    """Pulls per-frame groups from a frame-ordered stream."""

    def __init__(self, it: Iterator, what: str):
        self.it = it
        self.what = what
        self.pending = next(it, None)

    def take(self, frame_index: int, known_frames) -> list:
        out = []
        while self.pending is not None and self.pending.frame_index <= frame_index:
            if self.pending.frame_index not in known_frames:
                raise SequencingError(f"{self.what} record for frame {self.pending.frame_index}, which is not in the frame stream")
            if self.pending.frame_index == frame_index:
                out.append(self.pending)
            self.pending = next(self.it, None)
        return out


@dataclass(frozen=True)
class RunStats:
    frames: int
    records: int
    seconds: float

    @property
    def fps(self) -> float:
        return self.frames / self.seconds if self.seconds > 0 else float("inf")


def run_pipeline(cfg: RunConfig, sink: TextIO) -> RunStats:
    """Process every frame in order and write output records to ``sink``.

    Lines are written as each frame completes, so on a stream error the
    output holds every frame processed before it.
    """
    intr, extr = read_calibration(cfg.calibration)
    if extr is None:
        raise InputError(f"{cfg.calibration}: calibration has no rotation/translation")
    ground = read_ground_model(cfg.ground)
    frames = list(parse_frame_stream(cfg.frames))
    known = {m.frame_index for m in frames}
    for m in frames:
        if (m.width, m.height) != (intr.width, intr.height):
            raise ParseError(f"frame {m.frame_index} is {m.width}x{m.height}, camera is {intr.width}x{intr.height}", str(cfg.frames))

    sink.write(OUTPUT_HEADER + "\n")
    sink.write(frames_line(frames[0].frame_index, frames[-1].frame_index) + "\n" if frames else frames_line(None, None) + "\n")

    tracker = Tracker(cfg.tracker, lambda px: backproject_to_ground(px, intr, extr, ground))
    dets = _Grouped(parse_detection_stream(cfg.detections), "detection")
    poses = _Grouped(parse_pose_stream(cfg.poses), "pose") if cfg.poses is not None else None
    flows = parse_flow_stream(cfg.flow, frames)

    n_records = 0
    start = time.perf_counter()
    for meta, flow in zip(frames, flows):
        groups = dets.take(meta.frame_index, known)
        detections = filter_classes([d for g in groups for d in g.detections], cfg.tracker.min_confidence)
        tracker.step(meta.frame_index, meta.timestamp_s, detections, flow)
        if poses is not None:
            for rec in poses.take(meta.frame_index, known):
                result = associate_pose(rec.hint, rec.skeleton, tracker.objects, cfg.pose_gate_px)
                if result is not None:
                    attach_pose(tracker.objects, result)
        update_actions(tracker.objects, meta.timestamp_s, cfg.thresholds, cfg.window_s, cfg.pose_cadence_s)
        lines = [r.format() for r in records_of(tracker.snapshot())]
        if lines:
            sink.write("\n".join(lines) + "\n")
        n_records += len(lines)
    # trailing records past the last frame are an error too
    if frames:
        dets.take(frames[-1].frame_index, known)
    if dets.pending is not None:
        raise SequencingError(f"detection record for frame {dets.pending.frame_index}, which is not in the frame stream")
    return RunStats(len(frames), n_records, time.perf_counter() - start)
