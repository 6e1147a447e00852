"""Deterministic synthetic scenarios: scripted agents seen by a calibrated
camera, rendered into detection, flow and pose streams plus ground truth."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..actionrules import ActionLabel, MotionMeasures, RuleThresholds, classify
from ..errors import InputError
from ..geom3d import (
    CameraExtrinsics,
    CameraIntrinsics,
    GroundModel,
    Plane,
    ground_point_below,
    project_points,
)
from ..geom3d.camera import BEHIND_CAMERA_Z
from ..geom3d.io import format_calibration, format_ground_model, read_calibration, read_ground_model
from ..ingest import FrameMeta, flow_path, format_detection, format_frame_meta, format_pose_record, write_flow
from ..posekin import N_JOINTS, Skeleton2D, upper_body_orientation
from ..records import TRUTH_HEADER, TruthRecord, format_records
from ..rng import Xoshiro256
from ..trackcore import BBox, Detection, MotionField, ObjectClass

UPRIGHT, PRONE = "upright", "prone"
# Body box proportions relative to person height; 0.41 is the usual
# width/height ratio of pedestrian detection boxes.
BODY_WIDTH_RATIO = 0.41
BODY_DEPTH_RATIO = 0.2
TRUE_CONFIDENCE = 0.9
# Joint positions as fractions of body length from the feet, Human3.6M order.
JOINT_FRACTIONS = np.array(
    [0.53, 0.53, 0.28, 0.04, 0.53, 0.28, 0.04, 0.63, 0.75, 0.84, 0.93, 0.80, 0.64, 0.48, 0.80, 0.64, 0.48]
)
PRONE_JOINT_HEIGHT_M = 0.15
FP_WIDTH_PX = (15.0, 45.0)
FP_HEIGHT_PX = (30.0, 110.0)
FP_CONFIDENCE = (0.5, 1.0)


@dataclass(frozen=True)
class NoiseConfig:
    jitter_px: float = 0.0
    dropout: float = 0.0
    false_positives_per_frame: float = 0.0

    def __post_init__(self):
        if self.jitter_px < 0 or not 0 <= self.dropout <= 1 or self.false_positives_per_frame < 0:
            raise InputError("noise settings out of range")


@dataclass(frozen=True)
class AgentScript:
    name: str
    waypoints: tuple  # ((t, x, y), ...) strictly increasing t
    postures: tuple = ((0.0, UPRIGHT),)
    height_m: float = 1.75
    heading_deg: float = 0.0  # body axis direction (feet -> head) while prone

    def position(self, t: float):
        wp = self.waypoints
        if t <= wp[0][0]:
            return wp[0][1], wp[0][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(wp, wp[1:]):
            if t <= t1:
                a = (t - t0) / (t1 - t0)
                return x0 + a * (x1 - x0), y0 + a * (y1 - y0)
        return wp[-1][1], wp[-1][2]

    def speed_mps(self, t: float) -> float:
        """Scripted speed; at a waypoint the outgoing segment applies."""
        wp = self.waypoints
        for (t0, x0, y0), (t1, x1, y1) in zip(wp, wp[1:]):
            if t0 <= t < t1:
                return math.hypot(x1 - x0, y1 - y0) / (t1 - t0)
        return 0.0

    def posture(self, t: float) -> str:
        current = self.postures[0][1]
        for ts, p in self.postures:
            if ts <= t:
                current = p
        return current


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float
    frame_rate_hz: float
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    ground: GroundModel
    agents: tuple
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0
    flow_scale: float = 8.0
    pose_cadence_s: float = 1.0
    modality: str = "rgb"

    def __post_init__(self):
        if not self.frame_rate_hz > 0:
            raise InputError("frame_rate_hz must be positive")
        if not self.duration_s > 0:
            raise InputError("duration_s must be positive")
        if self.flow_scale < 1:
            raise InputError("flow_scale must be >= 1")
        if not self.agents:
            raise InputError("scenario has no agents")
        for agent in self.agents:
            times = [w[0] for w in agent.waypoints]
            if not times:
                raise InputError(f"agent {agent.name} has no waypoints")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise InputError(f"agent {agent.name}: waypoint times must increase")
            if times[0] < 0 or times[-1] > self.duration_s + 1e-9:
                raise InputError(f"agent {agent.name}: waypoint times must lie within [0, duration_s]")
            for _, p in agent.postures:
                if p not in (UPRIGHT, PRONE):
                    raise InputError(f"agent {agent.name}: posture must be upright or prone, got {p!r}")
            if agent.height_m <= 0:
                raise InputError(f"agent {agent.name}: height must be positive")

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.duration_s * self.frame_rate_hz + 1e-9))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def with_noise(self, noise: NoiseConfig) -> "ScenarioConfig":
        return replace(self, noise=noise)


# -- config file --------------------------------------------------------------


def _floats(text: str, n=None, what="value"):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"bad {what}: {text!r}") from None
    if n is not None and len(vals) != n:
        raise InputError(f"{what} needs {n} numbers, got {len(vals)}")
    return vals


def loop_waypoints(cx, cy, radius, speed, segments, duration, phase_deg=0.0):
    """Waypoints that run counter-clockwise around a regular polygon inscribed
    in a circle, at constant speed, for the whole duration."""
    side = 2.0 * radius * math.sin(math.pi / segments)
    dt = side / speed
    pts = []
    k = 0
    phase = math.radians(phase_deg)
    while True:
        t = k * dt
        ang = phase + 2.0 * math.pi * k / segments
        pts.append((t, cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
        if t >= duration:
            break
        k += 1
    # trim the last segment so the final waypoint sits at the duration
    (t0, x0, y0), (t1, x1, y1) = pts[-2], pts[-1]
    a = (duration - t0) / (t1 - t0)
    pts[-1] = (duration, x0 + a * (x1 - x0), y0 + a * (y1 - y0))
    if pts[-1][0] <= pts[-2][0]:
        pts.pop()
    return tuple(pts)


def _parse_agent(name, sec, duration):
    if "loop" in sec:
        cx, cy, r, v, n, *rest = _floats(sec["loop"], what="loop")
        waypoints = loop_waypoints(cx, cy, r, v, int(n), duration, rest[0] if rest else 0.0)
    elif "waypoints" in sec:
        waypoints = []
        for chunk in sec["waypoints"].split(";"):
            if chunk.strip():
                waypoints.append(tuple(_floats(chunk, 3, "waypoint 't x y'")))
        waypoints = tuple(waypoints)
    else:
        raise InputError(f"agent {name} needs 'waypoints' or 'loop'")
    postures = []
    for chunk in sec.get("posture", "0 upright").split(";"):
        parts = chunk.split()
        if len(parts) != 2:
            raise InputError(f"agent {name}: posture entries are 't upright|prone'")
        postures.append((float(parts[0]), parts[1]))
    return AgentScript(
        name=name,
        waypoints=waypoints,
        postures=tuple(postures),
        height_m=sec.getfloat("height_m", 1.75),
        heading_deg=sec.getfloat("heading_deg", 0.0),
    )


def parse_scenario(text: str, base_dir: Optional[Path] = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InputError(f"scenario config: {exc}") from None
    base = Path(base_dir) if base_dir is not None else Path(".")
    try:
        sc = cp["scenario"]
        duration = sc.getfloat("duration_s")
        cam = cp["camera"]
        if "calibration" in cam:
            intr, extr = read_calibration(base / cam["calibration"])
            if extr is None:
                raise InputError("scenario calibration file carries no rotation/translation")
        else:
            intr = CameraIntrinsics(
                fx=cam.getfloat("fx"),
                fy=cam.getfloat("fy"),
                cx=cam.getfloat("cx"),
                cy=cam.getfloat("cy"),
                width=cam.getint("width"),
                height=cam.getint("height"),
                **{k: cam.getfloat(k, 0.0) for k in ("k1", "k2", "k3", "p1", "p2")},
            )
            extr = CameraExtrinsics.looking(
                _floats(cam["position"], 3, "camera position"),
                cam.getfloat("yaw_deg", 0.0),
                cam.getfloat("pitch_deg", 0.0),
                cam.getfloat("roll_deg", 0.0),
            )
        gsec = cp["ground"] if cp.has_section("ground") else {}
        if "model" in gsec:
            ground = read_ground_model(base / gsec["model"])
        else:
            vals = _floats(gsec.get("plane", "0 0 0 0 0 1"), 6, "ground plane")
            ground = Plane(vals[:3], vals[3:])
        ns = cp["noise"] if cp.has_section("noise") else None
        noise = NoiseConfig(
            jitter_px=ns.getfloat("jitter_px", 0.0) if ns else 0.0,
            dropout=ns.getfloat("dropout", 0.0) if ns else 0.0,
            false_positives_per_frame=ns.getfloat("false_positives_per_frame", 0.0) if ns else 0.0,
        )
        agents = tuple(
            _parse_agent(name.split(".", 1)[1], cp[name], duration) for name in cp.sections() if name.startswith("agent.")
        )
        return ScenarioConfig(
            duration_s=duration,
            frame_rate_hz=sc.getfloat("frame_rate_hz"),
            intrinsics=intr,
            extrinsics=extr,
            ground=ground,
            agents=agents,
            noise=noise,
            seed=int(sc.get("seed", "0"), 0),
            flow_scale=sc.getfloat("flow_scale", 8.0),
            pose_cadence_s=sc.getfloat("pose_cadence_s", 1.0),
            modality=sc.get("modality", "rgb"),
        )
    except KeyError as exc:
        raise InputError(f"scenario config: missing section or key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"scenario config: {exc}") from None


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent)


def builtin_scenario(name: str = "four_agents") -> ScenarioConfig:
    """Scenario shipped with the package (``four_agents``, ``throughput``)."""
    return parse_scenario(builtin_scenario_text(name))


def builtin_scenario_text(name: str = "four_agents") -> str:
    return resources.files("actiontrack.simeval").joinpath("data").joinpath(f"{name}.ini").read_text(encoding="utf-8")


# -- rendering ----------------------------------------------------------------


@dataclass
class AgentView:
    """Projection of one agent at one instant."""

    ground: np.ndarray
    bbox: Optional[BBox]
    anchor: Optional[np.ndarray]
    skeleton_px: Optional[np.ndarray]
    depth: float


def _body_frame(agent: AgentScript, posture: str, cam_center, ground_pt):
    """Axis (feet -> head) and lateral unit vectors of the body box."""
    if posture == UPRIGHT:
        axis = np.array([0.0, 0.0, 1.0])
        to_cam = cam_center - ground_pt
        lateral = np.array([-to_cam[1], to_cam[0], 0.0])
        n = np.linalg.norm(lateral)
        lateral = lateral / n if n > 1e-9 else np.array([1.0, 0.0, 0.0])
    else:
        h = math.radians(agent.heading_deg)
        axis = np.array([math.cos(h), math.sin(h), 0.0])
        lateral = np.array([-axis[1], axis[0], 0.0])
    return axis, lateral


def render_agent(agent: AgentScript, t: float, cfg: ScenarioConfig) -> AgentView:
    intr, extr = cfg.intrinsics, cfg.extrinsics
    x, y = agent.position(t)
    ground_pt = ground_point_below(cfg.ground, x, y)
    if ground_pt is None:
        raise InputError(f"agent {agent.name} at ({x:.2f}, {y:.2f}) is off the ground model")
    posture = agent.posture(t)
    axis, lateral = _body_frame(agent, posture, extr.center, ground_pt)
    up = np.cross(axis, lateral) if posture == PRONE else np.cross(lateral, axis)
    length = agent.height_m
    half_width = 0.5 * BODY_WIDTH_RATIO * length
    depth = BODY_DEPTH_RATIO * length
    if posture == UPRIGHT:
        base = ground_pt
        extent = [(0.0, length), (-half_width, half_width), (-0.5 * depth, 0.5 * depth)]
        corners = [base + a * axis + b * lateral + c * up for a in extent[0] for b in extent[1] for c in extent[2]]
        joints = base + np.outer(JOINT_FRACTIONS * length, axis)
    else:
        base = ground_pt - 0.5 * length * axis
        up = np.array([0.0, 0.0, 1.0])
        extent = [(0.0, length), (-half_width, half_width), (0.0, depth)]
        corners = [base + a * axis + b * lateral + c * up for a in extent[0] for b in extent[1] for c in extent[2]]
        joints = base + np.outer(JOINT_FRACTIONS * length, axis) + PRONE_JOINT_HEIGHT_M * up

    depth = float((extr.rotation @ ground_pt + extr.translation)[2])
    pts = np.vstack([ground_pt[None, :], np.array(corners), joints])
    cam_z = pts @ extr.rotation[2] + extr.translation[2]
    if np.any(cam_z <= BEHIND_CAMERA_Z):
        return AgentView(ground_pt, None, None, None, depth)
    px = project_points(pts, intr, extr)
    anchor = px[0]
    if not intr.contains(anchor):
        return AgentView(ground_pt, None, None, None, depth)
    corner_px = px[1:9]
    w = float(corner_px[:, 0].max() - corner_px[:, 0].min())
    h = float(corner_px[:, 1].max() - corner_px[:, 1].min())
    # Size from the projected body box; placed so its bottom-center is the
    # projected ground contact point.
    bbox = BBox(float(anchor[0] - 0.5 * w), float(anchor[1] - h), w, h)
    return AgentView(ground_pt, bbox, anchor, px[9:], depth)


@dataclass
class GeneratedScenario:
    config: ScenarioConfig
    frames: List[FrameMeta]
    detections: List[tuple]  # (timestamp_s, Detection) in file order
    poses: List[tuple]  # (frame_index, timestamp_s, hint, Skeleton2D)
    flows: List[MotionField]
    truth: List[TruthRecord]


def _truth_action(agent: AgentScript, t: float) -> ActionLabel:
    posture = agent.posture(t)
    speed = agent.speed_mps(t) * 3.6
    return classify(MotionMeasures(speed, 90.0 if posture == UPRIGHT else 0.0), RuleThresholds())


def generate(cfg: ScenarioConfig) -> GeneratedScenario:
    """Render the scenario into detection/flow/pose streams and truth.

    Identical configs (seed included) give identical output.
    """
    rng = Xoshiro256(cfg.seed)
    intr = cfg.intrinsics
    frames, dets, poses, flows, truth = [], [], [], [], []
    pose_every = max(1, int(round(cfg.pose_cadence_s * cfg.frame_rate_hz)))
    noise = cfg.noise
    prev_views = None
    for f in range(cfg.n_frames):
        t = f / cfg.frame_rate_hz
        frames.append(FrameMeta(f, t, intr.width, intr.height, cfg.modality))
        views = [render_agent(a, t, cfg) for a in cfg.agents]

        for k, (agent, view) in enumerate(zip(cfg.agents, views)):
            visible = view.bbox is not None
            orientation = None
            if visible:
                skel = Skeleton2D(view.skeleton_px, np.ones(N_JOINTS, dtype=bool), t)
                orientation = upper_body_orientation(skel)
            b = view.bbox
            truth.append(
                TruthRecord(
                    frame_index=f,
                    timestamp_s=t,
                    agent_id=k + 1,
                    visible=visible,
                    action=_truth_action(agent, t).code,
                    speed_kmh=agent.speed_mps(t) * 3.6,
                    orientation_deg=orientation,
                    bbox=(b.x, b.y, b.w, b.h) if visible else None,
                    ground=tuple(float(v) for v in view.ground),
                )
            )

        for view in views:
            if view.bbox is None:
                continue
            drop = rng.uniform() < noise.dropout
            jx, jy, jw, jh = (rng.normal(0.0, noise.jitter_px) for _ in range(4))
            if drop:
                continue
            b = view.bbox
            box = BBox(b.x + jx, b.y + jy, max(1.0, b.w + jw), max(1.0, b.h + jh))
            dets.append((t, Detection(box, ObjectClass.HUMAN, TRUE_CONFIDENCE, f)))

        n_fp = int(noise.false_positives_per_frame)
        if rng.uniform() < noise.false_positives_per_frame - n_fp:
            n_fp += 1
        for _ in range(n_fp):
            w = rng.uniform(*FP_WIDTH_PX)
            h = rng.uniform(*FP_HEIGHT_PX)
            x = rng.uniform(0.0, intr.width - w)
            y = rng.uniform(0.0, intr.height - h)
            conf = rng.uniform(*FP_CONFIDENCE)
            dets.append((t, Detection(BBox(x, y, w, h), ObjectClass.HUMAN, conf, f)))

        if f % pose_every == 0:
            for view in views:
                if view.bbox is not None:
                    skel = Skeleton2D(view.skeleton_px, np.ones(N_JOINTS, dtype=bool), t)
                    poses.append((f, t, view.bbox.center, skel))

        flows.append(_synthesize_flow(prev_views, views, cfg))
        prev_views = views
    return GeneratedScenario(cfg, frames, dets, poses, flows, truth)


def _synthesize_flow(prev_views, views, cfg: ScenarioConfig) -> MotionField:
    field = MotionField.zeros(cfg.intrinsics.width, cfg.intrinsics.height, cfg.flow_scale)
    if prev_views is None:
        return field
    vec = np.array(field.vectors)
    # far agents first so nearer ones overwrite them
    order = sorted(range(len(views)), key=lambda k: -prev_views[k].depth)
    for k in order:
        before, after = prev_views[k], views[k]
        if before.bbox is None or after.bbox is None:
            continue
        win = field.window(before.bbox)
        if win is None:
            continue
        vec[win] = (after.anchor - before.anchor) / cfg.flow_scale
    return MotionField(vec, cfg.flow_scale)


# -- files --------------------------------------------------------------------

STREAM_FILES = {
    "frames": "frames.txt",
    "detections": "detections.txt",
    "poses": "poses.txt",
    "flow": "flow",
    "truth": "truth.txt",
    "calibration": "camera.cal",
    "ground": "ground.txt",
    "run": "run.ini",
}

RUN_TEMPLATE = """\
[inputs]
calibration = {calibration}
ground = {ground}
frames = {frames}
detections = {detections}
poses = {poses}
flow = {flow}

[actions]
pose_cadence_s = {cadence:g}

[output]
tracks = tracks.txt
"""


def write_scenario(gen: GeneratedScenario, outdir) -> dict:
    """Write streams, truth, calibration, ground model and a ready-to-use run
    config into ``outdir``; returns the written paths by role."""
    out = Path(outdir)
    (out / STREAM_FILES["flow"]).mkdir(parents=True, exist_ok=True)
    cfg = gen.config
    paths = {k: out / v for k, v in STREAM_FILES.items()}

    def write(key, header, lines):
        with open(paths[key], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for line in lines:
                fh.write(line + "\n")

    write("frames", "# frame_index timestamp_s width height modality", (format_frame_meta(m) for m in gen.frames))
    write(
        "detections",
        "# frame_index timestamp_s class confidence x y w h",
        (format_detection(d, t) for t, d in gen.detections),
    )
    write(
        "poses",
        "# frame_index timestamp_s hint_x hint_y (jx jy jvalid) x 17",
        (format_pose_record(f, t, hint, s) for f, t, hint, s in gen.poses),
    )
    for meta, fld in zip(gen.frames, gen.flows):
        write_flow(flow_path(paths["flow"], meta.frame_index), fld)
    frame_range = (gen.frames[0].frame_index, gen.frames[-1].frame_index) if gen.frames else None
    paths["truth"].write_text(format_records(gen.truth, TRUTH_HEADER, frame_range), encoding="utf-8")
    paths["calibration"].write_text(format_calibration(cfg.intrinsics, cfg.extrinsics), encoding="utf-8")
    paths["ground"].write_text(format_ground_model(cfg.ground), encoding="utf-8")
    paths["run"].write_text(
        RUN_TEMPLATE.format(cadence=cfg.pose_cadence_s, **STREAM_FILES),
        encoding="utf-8",
    )
    return paths
