"""Line formats for tracker output and scenario truth.

Tracker output, one line per active object per frame, ordered by
``(frame_index, person_id)``::

    frame_index timestamp_s person_id class action_code speed_kmh orientation_deg x y w h gx gy gz

Truth, one line per agent per frame::

    frame_index timestamp_s agent_id visible action_code speed_kmh orientation_deg x y w h gx gy gz

``-`` marks unavailable fields. Both files start with ``# frames FIRST LAST``
naming the frame range they cover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from .errors import ParseError

NA = "-"
OUTPUT_HEADER = "# frame_index timestamp_s person_id class action_code speed_kmh orientation_deg x y w h gx gy gz"
TRUTH_HEADER = "# frame_index timestamp_s agent_id visible action_code speed_kmh orientation_deg x y w h gx gy gz"


def _fmt(value, spec):
    return NA if value is None else format(value, spec)


def _opt(text, where):
    if text == NA:
        return None
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"expected number or '-', got {text!r}", where) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", where)
    return v


def frames_line(first: Optional[int], last: Optional[int]) -> str:
    if first is None:
        return "# frames - -"
    return f"# frames {first} {last}"


@dataclass(frozen=True)
class OutputRecord:
    frame_index: int
    timestamp_s: float
    person_id: int
    class_label: str
    action: Optional[str]
    speed_kmh: Optional[float]
    orientation_deg: Optional[float]
    bbox: Tuple[float, float, float, float]
    ground: Optional[Tuple[float, float, float]]

    def format(self) -> str:
        x, y, w, h = self.bbox
        g = self.ground or (None, None, None)
        return " ".join(
            [
                str(self.frame_index),
                f"{self.timestamp_s:.4f}",
                str(self.person_id),
                self.class_label,
                self.action or NA,
                _fmt(self.speed_kmh, ".1f"),
                _fmt(self.orientation_deg, ".1f"),
                f"{x:.2f}",
                f"{y:.2f}",
                f"{w:.2f}",
                f"{h:.2f}",
                _fmt(g[0], ".4f"),
                _fmt(g[1], ".4f"),
                _fmt(g[2], ".4f"),
            ]
        )


@dataclass(frozen=True)
class TruthRecord:
    frame_index: int
    timestamp_s: float
    agent_id: int
    visible: bool
    action: str
    speed_kmh: float
    orientation_deg: Optional[float]
    bbox: Optional[Tuple[float, float, float, float]]
    ground: Tuple[float, float, float]

    def format(self) -> str:
        b = self.bbox or (None,) * 4
        return " ".join(
            [
                str(self.frame_index),
                f"{self.timestamp_s:.4f}",
                str(self.agent_id),
                "1" if self.visible else "0",
                self.action,
                f"{self.speed_kmh:.4f}",
                _fmt(self.orientation_deg, ".4f"),
                *(_fmt(v, ".3f") for v in b),
                *(f"{v:.6f}" for v in self.ground),
            ]
        )


def _read(source, expected_fields, name):
    frame_range = None
    lines = source.splitlines() if isinstance(source, str) else source
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 3 and parts[0] == "frames":
                frame_range = None if parts[1] == NA else (int(parts[1]), int(parts[2]))
            continue
        f = line.split()
        where = f"{name}:{lineno}"
        if len(f) != expected_fields:
            raise ParseError(f"expected {expected_fields} fields, got {len(f)}", where)
        yield frame_range, where, f


def _int(text, where):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected integer, got {text!r}", where) from None


def parse_output(source, name: str = "<tracks>"):
    """Returns ``(records, frame_range)``; ``source`` is text or an iterable of lines."""
    records: List[OutputRecord] = []
    frame_range = None
    for frame_range, where, f in _read(source, 14, name):
        g = [_opt(v, where) for v in f[11:14]]
        records.append(
            OutputRecord(
                frame_index=_int(f[0], where),
                timestamp_s=_opt(f[1], where),
                person_id=_int(f[2], where),
                class_label=f[3],
                action=None if f[4] == NA else f[4],
                speed_kmh=_opt(f[5], where),
                orientation_deg=_opt(f[6], where),
                bbox=tuple(_opt(v, where) for v in f[7:11]),
                ground=None if any(v is None for v in g) else tuple(g),
            )
        )
    if frame_range is None and records:
        frame_range = (records[0].frame_index, records[-1].frame_index)
    return records, frame_range


def parse_truth(source, name: str = "<truth>"):
    records: List[TruthRecord] = []
    frame_range = None
    for frame_range, where, f in _read(source, 14, name):
        b = [_opt(v, where) for v in f[7:11]]
        records.append(
            TruthRecord(
                frame_index=_int(f[0], where),
                timestamp_s=_opt(f[1], where),
                agent_id=_int(f[2], where),
                visible=f[3] == "1",
                action=f[4],
                speed_kmh=_opt(f[5], where),
                orientation_deg=_opt(f[6], where),
                bbox=None if any(v is None for v in b) else tuple(b),
                ground=tuple(_opt(v, where) for v in f[11:14]),
            )
        )
    if frame_range is None and records:
        frame_range = (records[0].frame_index, records[-1].frame_index)
    return records, frame_range


def format_records(records: Iterable, header: str, frame_range) -> str:
    first, last = frame_range if frame_range else (None, None)
    lines = [header, frames_line(first, last)]
    lines.extend(r.format() for r in records)
    return "\n".join(lines) + "\n"
