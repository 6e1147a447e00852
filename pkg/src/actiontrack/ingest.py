"""Stream parsing for frames, detections, dense flow and poses, plus the
thermal-image preprocessing transform.

Formats (space separated, ``#`` starts a comment line):

* frames:     ``frame_index timestamp_s width height modality``
* detections: ``frame_index timestamp_s class confidence x y w h``
* poses:      ``frame_index timestamp_s hint_x hint_y`` + 17 x ``jx jy jvalid``
* flow:       one binary file per frame, ``flow_%06d.bin``: magic ``FLO1``,
  uint32 width, uint32 height, float32 scale, then ``width*height`` pairs of
  float32 ``(du, dv)`` in row-major order, all little-endian.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, NamedTuple

import numpy as np

from .errors import InputError, ParseError, SequencingError
from .posekin import N_JOINTS, Skeleton2D
from .trackcore import BBox, Detection, MotionField, ObjectClass

MODALITIES = ("rgb", "thermal")
FLOW_MAGIC = b"FLO1"
FLOW_HEADER = struct.Struct("<4sIIf")
FLOW_NAME = "flow_{:06d}.bin"

# Detector label -> tracked class. Everything else maps to "other".
CLASS_MAP = {"human": ObjectClass.HUMAN, "person": ObjectClass.HUMAN, "car": ObjectClass.CAR}
TRACKED_CLASSES = (ObjectClass.HUMAN, ObjectClass.CAR)


@dataclass(frozen=True)
class FrameMeta:
    frame_index: int
    timestamp_s: float
    width: int
    height: int
    modality: str = "rgb"


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit row-major image, ``data`` shaped (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise InputError(f"image must have 1 or 3 channels, got shape {data.shape}")
        if data.dtype != np.uint8:
            raise InputError(f"image samples must be 8-bit, got {data.dtype}")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_bytes(cls, buf: bytes, width: int, height: int, channels: int) -> "ImageBuffer":
        if len(buf) != width * height * channels:
            raise InputError(f"buffer holds {len(buf)} bytes, expected {width * height * channels}")
        return cls(np.frombuffer(buf, dtype=np.uint8).reshape(height, width, channels))


def preprocess_thermal(img: ImageBuffer) -> ImageBuffer:
    """Greyscale (Rec.601 luma, rounded half up) followed by inversion."""
    if img.width == 0 or img.height == 0:
        raise InputError("empty image")
    if img.channels == 3:
        rgb = img.data.astype(np.int32)
        grey = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    else:
        grey = img.data[..., 0].astype(np.int32)
    return ImageBuffer((255 - grey).astype(np.uint8)[:, :, None])


def filter_classes(dets: Iterable[Detection], min_confidence: float) -> List[Detection]:
    return [d for d in dets if d.class_label in TRACKED_CLASSES and d.confidence >= min_confidence]


# -- text streams -------------------------------------------------------------


def _lines(source):
    """(location-name, line number, fields) for data lines of a path or text stream."""
    if isinstance(source, (str, os.PathLike)):
        name = str(source)
        fh = open(source, encoding="utf-8")
    else:
        name = getattr(source, "name", "<stream>")
        fh = source
    try:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield name, lineno, line.split()
    finally:
        if fh is not source:
            fh.close()


def _num(text, kind, where):
    try:
        value = kind(text)
    except ValueError:
        raise ParseError(f"expected {kind.__name__}, got {text!r}", where) from None
    if kind is float and not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", where)
    return value


def parse_frame_stream(source) -> Iterator[FrameMeta]:
    last = None
    for name, lineno, f in _lines(source):
        where = f"{name}:{lineno}"
        if len(f) != 5:
            raise ParseError(f"frame record needs 5 fields, got {len(f)}", where)
        meta = FrameMeta(_num(f[0], int, where), _num(f[1], float, where), _num(f[2], int, where), _num(f[3], int, where), f[4])
        if meta.modality not in MODALITIES:
            raise ParseError(f"modality must be one of {MODALITIES}, got {meta.modality!r}", where)
        if meta.width <= 0 or meta.height <= 0:
            raise ParseError("frame size must be positive", where)
        if last is not None and (meta.frame_index <= last.frame_index or meta.timestamp_s <= last.timestamp_s):
            raise SequencingError(f"{where}: frame {meta.frame_index} at {meta.timestamp_s}s does not follow frame {last.frame_index}")
        last = meta
        yield meta


class DetectionGroup(NamedTuple):
    frame_index: int
    timestamp_s: float
    detections: list


def parse_detection_stream(source) -> Iterator[DetectionGroup]:
    """Group consecutive detection records by frame index."""
    current = None
    for name, lineno, f in _lines(source):
        where = f"{name}:{lineno}"
        if len(f) != 8:
            raise ParseError(f"detection record needs 8 fields, got {len(f)}", where)
        frame = _num(f[0], int, where)
        ts = _num(f[1], float, where)
        conf = _num(f[3], float, where)
        x, y, w, h = (_num(v, float, where) for v in f[4:8])
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"confidence {conf} outside [0, 1]", where)
        if w <= 0 or h <= 0:
            raise ParseError(f"bbox size must be positive, got {w}x{h}", where)
        det = Detection(BBox(x, y, w, h), CLASS_MAP.get(f[2].lower(), ObjectClass.OTHER), conf, frame)
        if current is not None and frame == current.frame_index:
            current.detections.append(det)
            continue
        if current is not None:
            if frame < current.frame_index:
                raise SequencingError(f"{where}: frame index went from {current.frame_index} to {frame}")
            yield current
        current = DetectionGroup(frame, ts, [det])
    if current is not None:
        yield current


class PoseRecord(NamedTuple):
    frame_index: int
    timestamp_s: float
    hint: tuple
    skeleton: Skeleton2D


def parse_pose_stream(source) -> Iterator[PoseRecord]:
    n_fields = 4 + 3 * N_JOINTS
    last = None
    for name, lineno, f in _lines(source):
        where = f"{name}:{lineno}"
        if len(f) != n_fields:
            joints = (len(f) - 4) / 3
            raise ParseError(
                f"pose record must carry {N_JOINTS} joints ({n_fields} fields), got {len(f)} fields"
                + (f" ({joints:g} joints)" if joints == int(joints) else ""),
                where,
            )
        frame = _num(f[0], int, where)
        ts = _num(f[1], float, where)
        if last is not None and frame < last:
            raise SequencingError(f"{where}: frame index went from {last} to {frame}")
        last = frame
        hint = (_num(f[2], float, where), _num(f[3], float, where))
        vals = [_num(v, float, where) for v in f[4:]]
        arr = np.array(vals).reshape(N_JOINTS, 3)
        flags = arr[:, 2]
        if not np.all((flags == 0) | (flags == 1)):
            raise ParseError("joint validity flags must be 0 or 1", where)
        yield PoseRecord(frame, ts, hint, Skeleton2D(arr[:, :2], flags == 1, ts))


# -- writers ------------------------------------------------------------------


def format_frame_meta(meta: FrameMeta) -> str:
    return f"{meta.frame_index} {meta.timestamp_s:.6f} {meta.width} {meta.height} {meta.modality}"


def format_detection(det: Detection, timestamp_s: float) -> str:
    b = det.bbox
    return (
        f"{det.frame_index} {timestamp_s:.6f} {det.class_label.value} {det.confidence:.4f} "
        f"{b.x:.3f} {b.y:.3f} {b.w:.3f} {b.h:.3f}"
    )


def format_pose_record(frame_index: int, timestamp_s: float, hint, skel: Skeleton2D) -> str:
    parts = [str(frame_index), f"{timestamp_s:.6f}", f"{hint[0]:.3f}", f"{hint[1]:.3f}"]
    for (x, y), ok in zip(skel.joints, skel.valid):
        parts += [f"{x:.3f}", f"{y:.3f}", "1" if ok else "0"]
    return " ".join(parts)


# -- binary flow --------------------------------------------------------------


def flow_path(directory, frame_index: int) -> Path:
    return Path(directory) / FLOW_NAME.format(frame_index)


def encode_flow(field: MotionField) -> bytes:
    vec = np.ascontiguousarray(field.vectors, dtype="<f4")
    return FLOW_HEADER.pack(FLOW_MAGIC, field.width, field.height, float(field.scale)) + vec.tobytes()


def write_flow(path, field: MotionField) -> None:
    Path(path).write_bytes(encode_flow(field))


def decode_flow(buf: bytes, name: str = "<flow>", frame_size=None) -> MotionField:
    """Parse a binary flow payload; ``frame_size=(w, h)`` checks the field
    covers that frame at its scale."""
    if len(buf) < FLOW_HEADER.size:
        raise ParseError(f"flow header truncated: expected {FLOW_HEADER.size} bytes, got {len(buf)}", name)
    magic, w, h, scale = FLOW_HEADER.unpack_from(buf)
    if magic != FLOW_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {FLOW_MAGIC!r}", name)
    if w == 0 or h == 0 or not (math.isfinite(scale) and scale >= 1):
        raise ParseError(f"invalid flow header {w}x{h} scale {scale}", name)
    expected = w * h * 2
    actual = (len(buf) - FLOW_HEADER.size) // 4
    if (len(buf) - FLOW_HEADER.size) % 4 or actual != expected:
        raise ParseError(f"flow payload holds {actual} float values, expected {expected} ({w}x{h}x2)", name)
    if frame_size is not None:
        fw, fh = frame_size
        ew, eh = math.ceil(fw / scale), math.ceil(fh / scale)
        if (w, h) != (ew, eh):
            raise ParseError(f"flow field is {w}x{h}, frame {fw}x{fh} at scale {scale:g} needs {ew}x{eh}", name)
    vec = np.frombuffer(buf, dtype="<f4", offset=FLOW_HEADER.size).reshape(h, w, 2)
    if not np.all(np.isfinite(vec)):
        raise ParseError("flow field contains non-finite vectors", name)
    return MotionField(vec, float(scale))


def read_flow(path, frame_size=None) -> MotionField:
    return decode_flow(Path(path).read_bytes(), str(path), frame_size)


def parse_flow_stream(directory, frames: Iterable[FrameMeta]) -> Iterator[MotionField]:
    """MotionField for each frame, read from ``flow_%06d.bin`` files."""
    for meta in frames:
        path = flow_path(directory, meta.frame_index)
        if not path.exists():
            raise ParseError("missing flow file", str(path))
        yield read_flow(path, (meta.width, meta.height))

