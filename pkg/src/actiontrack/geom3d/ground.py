"""Ground models and pixel-to-ground back-projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import InputError
from .camera import CameraExtrinsics, CameraIntrinsics, project_points, undistort_points

PARALLEL_EPS = 1e-12
MIN_TRIANGLE_AREA = 1e-12


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        point = np.array(self.point, dtype=float).reshape(3)
        normal = np.array(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise InputError(f"plane normal must have unit length, got |n|={np.linalg.norm(normal)}")
        point.setflags(write=False)
        normal.setflags(write=False)
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal)

    @classmethod
    def horizontal(cls, z: float = 0.0) -> "Plane":
        return cls(np.array([0.0, 0.0, z]), np.array([0.0, 0.0, 1.0]))


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) meters
    faces: np.ndarray  # (F, 3) 0-based vertex indices

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) == 0:
            raise InputError("mesh has no triangles")
        if faces.min() < 0 or faces.max() >= len(verts):
            raise InputError("mesh face references a vertex that does not exist")
        a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        bad = np.flatnonzero(area <= MIN_TRIANGLE_AREA)
        if len(bad):
            raise InputError(f"degenerate mesh triangle {int(bad[0])} (area {area[bad[0]]:.3g} m^2)")
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)


GroundModel = Union[Plane, TriangleMesh]


def intersect_rays(origin, directions, ground: GroundModel) -> np.ndarray:
    """Intersect rays ``origin + s * d`` (s > 0) with the ground.

    ``directions`` has shape (N, 3). Returns (N, 3) hit points with NaN rows
    where there is no forward intersection.
    """
    origin = np.asarray(origin, dtype=float)
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    if isinstance(ground, Plane):
        denom = d @ ground.normal
        num = float(ground.normal @ (ground.point - origin))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = num / denom
        ok = (np.abs(denom) >= PARALLEL_EPS) & (s > 0) & np.isfinite(s)
    else:
        s = _mesh_ray_params(origin, d, ground)
        ok = np.isfinite(s)
    out = np.full(d.shape, np.nan)
    out[ok] = origin + s[ok, None] * d[ok]
    return out


def _mesh_ray_params(origin, d, mesh: TriangleMesh) -> np.ndarray:
    # Moller-Trumbore, looping over triangles and vectorized over rays. Strict
    # '<' keeps the earliest triangle on exact ties (shared edges).
    best = np.full(len(d), np.inf)
    verts = mesh.vertices
    eps = 1e-12
    for a_i, b_i, c_i in mesh.faces:
        a, b, c = verts[a_i], verts[b_i], verts[c_i]
        e1, e2 = b - a, c - a
        p = np.cross(d, e2)
        det = p @ e1
        valid = np.abs(det) > eps
        inv = np.zeros_like(det)
        inv[valid] = 1.0 / det[valid]
        tvec = origin - a
        bu = (p @ tvec) * inv
        q = np.cross(tvec, e1)
        bv = (d @ q) * inv
        s = (q @ e2) * inv
        hit = valid & (bu >= -eps) & (bv >= -eps) & (bu + bv <= 1.0 + eps) & (s > eps)
        closer = hit & (s < best)
        best[closer] = s[closer]
    best[~np.isfinite(best)] = np.nan
    return best


def pixel_rays(pixels, intr: CameraIntrinsics, extr: CameraExtrinsics):
    """World-frame ray directions (camera z component = 1) for pixels (N, 2),
    plus the mask of pixels whose distortion could be inverted."""
    xy, ok = undistort_points(pixels, intr)
    cam = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)
    return cam @ extr.rotation, ok


def backproject_to_ground(pixel, intr: CameraIntrinsics, extr: CameraExtrinsics, ground: GroundModel):
    """World point where the viewing ray of ``pixel`` meets the ground, or ``None``."""
    dirs, ok = pixel_rays(np.asarray(pixel, dtype=float).reshape(1, 2), intr, extr)
    if not ok[0]:
        return None
    hit = intersect_rays(extr.center, dirs, ground)[0]
    if np.isnan(hit[0]):
        return None
    return hit


def backproject_points(pixels, intr, extr, ground) -> np.ndarray:
    """Vectorized :func:`backproject_to_ground`; misses are NaN rows."""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    dirs, ok = pixel_rays(pixels, intr, extr)
    out = np.full((len(pixels), 3), np.nan)
    if ok.any():
        out[ok] = intersect_rays(extr.center, dirs[ok], ground)
    return out


@dataclass(frozen=True)
class GroundLookupTable:
    """Per-pixel ground coordinates, shape (height, width, 3); NaN marks pixels
    whose ray misses the ground."""

    points: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.points[..., 0])

    @property
    def shape(self):
        return self.points.shape[:2]

    def lookup(self, pixel):
        """Entry of the pixel nearest to ``pixel`` (u, v), or ``None``."""
        u, v = int(round(pixel[0])), int(round(pixel[1]))
        h, w = self.shape
        if not (0 <= u < w and 0 <= v < h):
            return None
        p = self.points[v, u]
        return None if np.isnan(p[0]) else p


def build_ground_lookup(intr: CameraIntrinsics, extr: CameraExtrinsics, ground: GroundModel) -> GroundLookupTable:
    vv, uu = np.mgrid[0 : intr.height, 0 : intr.width]
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(float)
    pts = backproject_points(pixels, intr, extr, ground)
    pts = pts.reshape(intr.height, intr.width, 3)
    pts.setflags(write=False)
    return GroundLookupTable(pts)


def lookup_reprojection_error(table: GroundLookupTable, intr, extr) -> np.ndarray:
    """Pixel distance between each valid entry's projection and its pixel
    center (NaN for invalid entries)."""
    h, w = table.shape
    vv, uu = np.mgrid[0:h, 0:w]
    pts = table.points.reshape(-1, 3)
    err = np.full(len(pts), np.nan)
    ok = ~np.isnan(pts[:, 0])
    if ok.any():
        proj = project_points(pts[ok], intr, extr)
        centers = np.stack([uu.ravel()[ok], vv.ravel()[ok]], axis=1)
        err[ok] = np.linalg.norm(proj - centers, axis=1)
    return err.reshape(h, w)


def ground_point_below(ground: GroundModel, x: float, y: float):
    """Ground point vertically below/above (x, y), or ``None`` if none exists."""
    if isinstance(ground, Plane):
        n, p0 = ground.normal, ground.point
        if abs(n[2]) < PARALLEL_EPS:
            return None
        z = p0[2] - (n[0] * (x - p0[0]) + n[1] * (y - p0[1])) / n[2]
        return np.array([x, y, z])
    top = float(ground.vertices[:, 2].max()) + 1.0
    hit = intersect_rays(np.array([x, y, top]), np.array([[0.0, 0.0, -1.0]]), ground)[0]
    return None if np.isnan(hit[0]) else hit
