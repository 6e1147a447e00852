"""Tracking and action metrics of tracker output against scenario truth."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..actionrules import ACTION_ORDER, DEFAULT_WINDOW_S
from ..errors import InputError

DEFAULT_GATE_M = 1.0
CODES = tuple(a.code for a in ACTION_ORDER)


@dataclass(frozen=True)
class TrackingMetrics:
    id_switches: int
    fragmentations: int
    match_rate: float
    mean_ground_error_m: float
    matched: int
    truth_visible: int
    switches_per_agent: Dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ActionMetrics:
    confusion: np.ndarray  # rows truth, columns predicted, in CODES order
    per_class_accuracy: Dict[str, Optional[float]]
    accuracy: float
    counted: int
    correct: int


def check_frame_ranges(output_range, truth_range) -> None:
    if output_range is not None and truth_range is not None and tuple(output_range) != tuple(truth_range):
        raise InputError(f"frame ranges differ: output covers {output_range}, truth covers {truth_range}")


def match_frames(output, truth, gate_m: float = DEFAULT_GATE_M):
    """Per-frame matching by ground distance.

    Returns ``{frame_index: [(agent_id, output_record, truth_record, distance)]}``.
    As in CLEAR-MOT, an agent keeps the output id it was last matched to while
    that id is present and within the gate. Remaining pairs are then taken
    greedily in order of increasing distance (ties by agent id then person id)
    while both sides are free and the distance is below the gate.
    """
    out_by_frame = defaultdict(list)
    for r in output:
        if r.ground is not None:
            out_by_frame[r.frame_index].append(r)
    truth_by_frame = defaultdict(list)
    for r in truth:
        if r.visible:
            truth_by_frame[r.frame_index].append(r)

    matches = {}
    previous = {}  # agent -> person id of its latest match
    for f in sorted(truth_by_frame):
        cands = []
        for tr in truth_by_frame[f]:
            tg = np.asarray(tr.ground)
            for orc in out_by_frame.get(f, ()):
                d = float(np.linalg.norm(np.asarray(orc.ground) - tg))
                if d < gate_m:
                    kept = previous.get(tr.agent_id) == orc.person_id
                    cands.append((not kept, d, tr.agent_id, orc.person_id, orc, tr))
        cands.sort(key=lambda c: c[:4])
        used_a, used_p, pairs = set(), set(), []
        for _, d, aid, pid, orc, tr in cands:
            if aid in used_a or pid in used_p:
                continue
            used_a.add(aid)
            used_p.add(pid)
            pairs.append((aid, orc, tr, d))
            previous[aid] = pid
        matches[f] = sorted(pairs, key=lambda p: p[0])
    return matches


def evaluate_tracking(output, truth, gate_m: float = DEFAULT_GATE_M) -> TrackingMetrics:
    """Identity and localization quality.

    An id switch is counted whenever the output id matched to a truth agent
    differs from the id it was last matched to. A fragmentation is counted
    whenever an agent's matched trajectory resumes after unmatched visible
    frames.
    """
    matches = match_frames(output, truth, gate_m)
    visible = defaultdict(list)
    for r in truth:
        if r.visible:
            visible[r.agent_id].append(r.frame_index)
    matched_at = {(aid, f): orc.person_id for f, pairs in matches.items() for aid, orc, _, _ in pairs}

    switches, frags = 0, 0
    per_agent = {}
    for aid in sorted(visible):
        last_id, was_matched, n = None, False, 0
        for f in sorted(visible[aid]):
            pid = matched_at.get((aid, f))
            if pid is None:
                was_matched = False
                continue
            if last_id is not None and pid != last_id:
                n += 1
            if last_id is not None and not was_matched:
                frags += 1
            last_id, was_matched = pid, True
        per_agent[aid] = n
        switches += n

    errors = [d for pairs in matches.values() for _, _, _, d in pairs]
    total_visible = sum(len(v) for v in visible.values())
    return TrackingMetrics(
        id_switches=switches,
        fragmentations=frags,
        match_rate=len(errors) / total_visible if total_visible else 0.0,
        mean_ground_error_m=float(np.mean(errors)) if errors else math.nan,
        matched=len(errors),
        truth_visible=total_visible,
        switches_per_agent=per_agent,
    )


def evaluate_actions(
    output,
    truth,
    lag_tolerance_s: float,
    window_s: float = DEFAULT_WINDOW_S,
    gate_m: float = DEFAULT_GATE_M,
) -> ActionMetrics:
    """Per-frame action accuracy over matched (output, truth) pairs.

    A prediction at time ``t`` is correct if the agent's truth label equals
    it at any time in ``[t - lag_tolerance_s, t]``; correct predictions are
    booked on the diagonal, wrong ones in the row of the truth label at ``t``.
    Unknown predictions made within ``window_s`` of an output track's first
    record are left out.
    """
    if lag_tolerance_s < 0:
        raise InputError("lag_tolerance_s must be >= 0")
    matches = match_frames(output, truth, gate_m)
    first_seen = {}
    for r in output:
        first_seen.setdefault(r.person_id, r.timestamp_s)
    history = defaultdict(list)  # agent -> [(t, code)] in time order
    for r in sorted(truth, key=lambda r: (r.agent_id, r.timestamp_s)):
        history[r.agent_id].append((r.timestamp_s, r.action))

    index = {c: i for i, c in enumerate(CODES)}
    confusion = np.zeros((len(CODES), len(CODES)), dtype=int)
    correct = 0
    eps = 1e-9
    for f in sorted(matches):
        for aid, orc, tr, _ in matches[f]:
            pred = orc.action or "UN"
            t = orc.timestamp_s
            if pred == "UN" and t - first_seen[orc.person_id] < window_s - eps:
                continue
            recent = {c for ts, c in history[aid] if t - lag_tolerance_s - eps <= ts <= t + eps}
            if pred in recent:
                confusion[index[pred], index[pred]] += 1
                correct += 1
            else:
                confusion[index[tr.action], index[pred]] += 1
    counted = int(confusion.sum())
    rows = confusion.sum(axis=1)
    per_class = {c: (float(confusion[i, i] / rows[i]) if rows[i] else None) for i, c in enumerate(CODES)}
    return ActionMetrics(confusion, per_class, correct / counted if counted else 0.0, counted, correct)


def format_report(tracking: TrackingMetrics, actions: ActionMetrics) -> str:
    def num(v):
        return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"

    lines = [
        f"id_switches {tracking.id_switches}",
        f"fragmentations {tracking.fragmentations}",
        f"match_rate {num(tracking.match_rate)}",
        f"mean_ground_error_m {num(tracking.mean_ground_error_m)}",
        f"action_accuracy {num(actions.accuracy)}",
        f"action_frames {actions.counted}",
    ]
    lines += [f"accuracy_{c} {num(actions.per_class_accuracy[c])}" for c in CODES]
    lines.append("# confusion rows=truth cols=predicted " + " ".join(CODES))
    for c, row in zip(CODES, actions.confusion):
        lines.append(c + " " + " ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> Dict[str, str]:
    """``metric -> value`` for the scalar lines of a report."""
    out = {}
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 2 and not line.startswith("#"):
            out[parts[0]] = parts[1]
    return out
