"""Plain-text formats for camera calibration, correspondences and ground models."""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import InputError, ParseError
from .calibrate import GroundControlPoint, PlanarView
from .camera import CameraExtrinsics, CameraIntrinsics
from .ground import GroundModel, Plane, TriangleMesh

_INTRINSIC_KEYS = ("width", "height", "fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2")


def _records(path):
    """(line number, fields) for every non-blank, non-comment line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def _floats(fields, where):
    try:
        return [float(x) for x in fields]
    except ValueError as exc:
        raise ParseError(f"not a number: {exc}", where) from None


# -- camera calibration file --------------------------------------------------


def format_calibration(intr: CameraIntrinsics, extr: CameraExtrinsics | None = None) -> str:
    lines = ["# camera calibration: pixels, meters; world frame right-handed, z up"]
    lines.append(f"width {intr.width}")
    lines.append(f"height {intr.height}")
    for key in _INTRINSIC_KEYS[2:]:
        lines.append(f"{key} {float(getattr(intr, key))!r}")
    if extr is not None:
        lines.append("rotation " + " ".join(repr(float(x)) for x in extr.rotation.ravel()))
        lines.append("translation " + " ".join(repr(float(x)) for x in extr.translation))
    return "\n".join(lines) + "\n"


def write_calibration(path, intr: CameraIntrinsics, extr: CameraExtrinsics | None = None) -> None:
    Path(path).write_text(format_calibration(intr, extr), encoding="utf-8")


def read_calibration(path):
    """Returns ``(intrinsics, extrinsics-or-None)``."""
    values = {}
    for lineno, fields in _records(path):
        where = f"{path}:{lineno}"
        key = fields[0]
        if key in ("rotation", "translation"):
            nums = _floats(fields[1:], where)
            expected = 9 if key == "rotation" else 3
            if len(nums) != expected:
                raise ParseError(f"{key} needs {expected} values, got {len(nums)}", where)
            values[key] = nums
        elif key in _INTRINSIC_KEYS:
            if len(fields) != 2:
                raise ParseError(f"{key} needs exactly one value", where)
            values[key] = _floats(fields[1:], where)[0]
        else:
            raise ParseError(f"unknown calibration key {key!r}", where)
    missing = [k for k in ("width", "height", "fx", "fy", "cx", "cy") if k not in values]
    if missing:
        raise ParseError(f"missing keys: {', '.join(missing)}", str(path))
    try:
        intr = CameraIntrinsics(
            **{k: values.get(k, 0.0) for k in _INTRINSIC_KEYS[2:]},
            width=int(values["width"]),
            height=int(values["height"]),
        )
        extr = None
        if "rotation" in values or "translation" in values:
            extr = CameraExtrinsics(
                np.array(values.get("rotation", np.eye(3).ravel())).reshape(3, 3),
                np.array(values.get("translation", np.zeros(3))),
            )
    except InputError as exc:
        raise ParseError(str(exc), str(path)) from None
    return intr, extr


# -- correspondences ----------------------------------------------------------


def read_correspondences(path):
    """Parse a correspondence file.

    ``view_id u v X Y Z`` lines yield ground control points, ``view_id u v x y``
    lines yield planar target observations. Returns ``("extrinsics", {view:
    [GroundControlPoint]})`` or ``("intrinsics", {view: PlanarView})``; one file
    holds one kind.
    """
    kind = None
    groups: "OrderedDict[str, list]" = OrderedDict()
    for lineno, fields in _records(path):
        where = f"{path}:{lineno}"
        if len(fields) not in (5, 6):
            raise ParseError(f"expected 5 or 6 fields, got {len(fields)}", where)
        this_kind = "extrinsics" if len(fields) == 6 else "intrinsics"
        if kind is None:
            kind = this_kind
        elif kind != this_kind:
            raise ParseError("mixed planar and 3D correspondences in one file", where)
        groups.setdefault(fields[0], []).append(_floats(fields[1:], where))
    if kind is None:
        return "extrinsics", {}
    if kind == "extrinsics":
        return kind, OrderedDict(
            (view, [GroundControlPoint(row[2:5], row[0:2]) for row in rows]) for view, rows in groups.items()
        )
    return kind, OrderedDict(
        (view, PlanarView(np.array(rows)[:, 2:4], np.array(rows)[:, 0:2])) for view, rows in groups.items()
    )


def format_gcps(gcps, view_id="0") -> str:
    lines = ["# view_id u_px v_px X_m Y_m Z_m"]
    for g in gcps:
        lines.append(" ".join([str(view_id)] + [repr(float(v)) for v in (*g.pixel, *g.world)]))
    return "\n".join(lines) + "\n"


def format_planar_views(views) -> str:
    lines = ["# view_id u_px v_px x_t y_t"]
    for i, view in enumerate(views):
        for (u, v), (x, y) in zip(view.pixels, view.target):
            lines.append(" ".join([str(i)] + [repr(float(c)) for c in (u, v, x, y)]))
    return "\n".join(lines) + "\n"


# -- ground model -------------------------------------------------------------


def read_ground_model(path) -> GroundModel:
    records = list(_records(path))
    if not records:
        raise ParseError("empty ground model file", str(path))
    lineno, head = records[0]
    where = f"{path}:{lineno}"
    try:
        if head[0] == "plane":
            if len(head) != 7:
                raise ParseError("plane needs px py pz nx ny nz", where)
            nums = _floats(head[1:], where)
            if len(records) > 1:
                raise ParseError("unexpected records after plane", f"{path}:{records[1][0]}")
            return Plane(nums[:3], nums[3:])
        if head[0] == "mesh":
            verts, faces = [], []
            for lineno, fields in records[1:]:
                where = f"{path}:{lineno}"
                if fields[0] == "v" and len(fields) == 4:
                    verts.append(_floats(fields[1:], where))
                elif fields[0] == "f" and len(fields) == 4:
                    try:
                        faces.append([int(x) for x in fields[1:]])
                    except ValueError:
                        raise ParseError("face indices must be integers", where) from None
                else:
                    raise ParseError(f"expected 'v x y z' or 'f i j k', got {' '.join(fields)!r}", where)
            return TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces).reshape(-1, 3))
    except InputError as exc:
        raise ParseError(str(exc), where) from None
    raise ParseError(f"first record must be 'plane' or 'mesh', got {head[0]!r}", where)


def format_ground_model(ground: GroundModel) -> str:
    header = "# ground model: meters, world frame right-handed, z up\n"
    if isinstance(ground, Plane):
        nums = " ".join(repr(float(x)) for x in (*ground.point, *ground.normal))
        return header + f"plane {nums}\n"
    lines = [header + "mesh"]
    lines += ["v " + " ".join(repr(float(x)) for x in v) for v in ground.vertices]
    lines += ["f " + " ".join(str(int(i)) for i in f) for f in ground.faces]
    return "\n".join(lines) + "\n"


def write_ground_model(path, ground: GroundModel) -> None:
    Path(path).write_text(format_ground_model(ground), encoding="utf-8")
