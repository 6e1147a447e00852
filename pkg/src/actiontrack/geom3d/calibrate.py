"""Intrinsic calibration from planar targets and extrinsic adjustment from
ground control points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import CalibrationDegenerateError, InputError
from .camera import (
    BEHIND_CAMERA_Z,
    CameraExtrinsics,
    CameraIntrinsics,
    camera_point_jacobian,
    distort_normalized,
    distortion_param_jacobian,
    orthonormalize,
    rodrigues,
    skew,
    undistort_points,
)
from .lm import levenberg_marquardt

MIN_GCPS = 4
MIN_VIEWS = 3
MIN_VIEW_POINTS = 6


@dataclass(frozen=True)
class GroundControlPoint:
    world: np.ndarray  # meters
    pixel: np.ndarray  # observed (u, v)

    def __post_init__(self):
        object.__setattr__(self, "world", np.asarray(self.world, dtype=float).reshape(3))
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float).reshape(2))


@dataclass(frozen=True)
class PlanarView:
    """Matched points of one view of a planar target (target z = 0)."""

    target: np.ndarray  # (N, 2) meters in the target plane
    pixels: np.ndarray  # (N, 2) observed pixels

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).reshape(-1, 2)
        pixels = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(target) != len(pixels):
            raise InputError("target and pixel lists differ in length")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "pixels", pixels)


class ExtrinsicsFit(NamedTuple):
    extrinsics: CameraExtrinsics
    rms: float
    iterations: int
    rms_history: list
    residuals: np.ndarray  # (N,) per-GCP pixel distance


class IntrinsicsFit(NamedTuple):
    intrinsics: CameraIntrinsics
    poses: list  # per-view CameraExtrinsics (target frame -> camera)
    rms: float
    view_rms: list


class _Params(NamedTuple):
    # duck-types CameraIntrinsics for the distortion helpers, without validation
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float
    k2: float
    k3: float
    p1: float
    p2: float


def _pose_residuals(world, pixels, intr, rot, trans):
    """Reprojection residuals (2N,) and Jacobian w.r.t. (omega, dt) (2N, 6)."""
    rw = world @ rot.T
    pc = rw + trans
    if np.any(pc[:, 2] <= BEHIND_CAMERA_Z):
        return np.full(2 * len(world), np.inf), np.zeros((2 * len(world), 6))
    xy = pc[:, :2] / pc[:, 2:3]
    d = distort_normalized(xy, intr)
    proj = np.stack([intr.fx * d[:, 0] + intr.cx, intr.fy * d[:, 1] + intr.cy], axis=1)
    jp = camera_point_jacobian(pc, intr)  # (N, 2, 3)
    jac = np.empty((len(world), 2, 6))
    # X_c = exp(omega) R X + t  =>  dX_c/domega = -[R X]_x
    jac[:, :, :3] = -np.einsum("nij,njk->nik", jp, np.array([skew(p) for p in rw]))
    jac[:, :, 3:] = jp
    return (proj - pixels).ravel(), jac.reshape(-1, 6)


def fit_extrinsics(
    gcps: Sequence[GroundControlPoint],
    intr: CameraIntrinsics,
    initial: CameraExtrinsics,
    max_iter: int = 100,
    step_tol: float = 1e-10,
) -> ExtrinsicsFit:
    if len(gcps) < MIN_GCPS:
        raise InputError(f"at least {MIN_GCPS} ground control points are required, got {len(gcps)}")
    world = np.array([g.world for g in gcps])
    pixels = np.array([g.pixel for g in gcps])
    for g in gcps:
        if not intr.contains(g.pixel):
            raise InputError(f"ground control point pixel {tuple(g.pixel)} outside the sensor")
    if np.linalg.matrix_rank(world - world.mean(axis=0), tol=1e-9) < 2:
        raise InputError("ground control points are collinear")

    def residuals(state):
        rot, trans = state
        return _pose_residuals(world, pixels, intr, rot, trans)

    def retract(state, delta):
        rot, trans = state
        return orthonormalize(rodrigues(delta[:3]) @ rot), trans + delta[3:]

    res = levenberg_marquardt(
        residuals,
        retract,
        (np.array(initial.rotation), np.array(initial.translation)),
        max_iter=max_iter,
        step_tol=step_tol,
        rms_count=len(gcps),
    )
    rot, trans = res.state
    r, _ = residuals(res.state)
    return ExtrinsicsFit(
        CameraExtrinsics(rot, trans),
        res.rms,
        res.iterations,
        res.rms_history,
        np.linalg.norm(r.reshape(-1, 2), axis=1),
    )


def initial_extrinsics(gcps: Sequence[GroundControlPoint], intr: CameraIntrinsics) -> CameraExtrinsics:
    """Closed-form pose guess from ground control points.

    Coplanar points (the usual case for ground markings) go through a plane
    homography; otherwise a 3x4 DLT is used, which needs 6 points.
    """
    if len(gcps) < MIN_GCPS:
        raise InputError(f"at least {MIN_GCPS} ground control points are required, got {len(gcps)}")
    world = np.array([g.world for g in gcps], dtype=float)
    xy, ok = undistort_points(np.array([g.pixel for g in gcps], dtype=float), intr)
    if not ok.all():
        raise InputError("ground control point pixel could not be undistorted")
    mean = world.mean(axis=0)
    _, sv, vt = np.linalg.svd(world - mean)
    if sv[1] < 1e-9 * max(sv[0], 1.0):
        raise InputError("ground control points are collinear")
    if sv[2] < 1e-6 * sv[0] or len(gcps) < 6:
        basis = np.c_[vt[0], vt[1], np.cross(vt[0], vt[1])]
        q = (world - mean) @ basis[:, :2]
        rot_p, t_p = _pose_from_homography(np.eye(3), homography_dlt(q, xy))
        rot = orthonormalize(rot_p @ basis.T)
        return CameraExtrinsics(rot, t_p - rot @ mean)
    rows = []
    for (x, y), w in zip(xy, world):
        wh = np.r_[w - mean, 1.0]
        rows.append(np.r_[wh, np.zeros(4), -x * wh])
        rows.append(np.r_[np.zeros(4), wh, -y * wh])
    _, _, vt = np.linalg.svd(np.array(rows))
    pm = vt[-1].reshape(3, 4)
    if np.linalg.det(pm[:, :3]) < 0:
        pm = -pm
    scale = np.cbrt(np.linalg.det(pm[:, :3]))
    rot = orthonormalize(pm[:, :3] / scale)
    return CameraExtrinsics(rot, pm[:, 3] / scale - rot @ mean)


def calibrate_extrinsics(gcps, intr: CameraIntrinsics, initial: CameraExtrinsics | None = None):
    """Refine a camera pose against surveyed ground control points.

    Damped Gauss-Newton over a 6-parameter pose (axis-angle rotation increment
    plus translation), started from ``initial`` or from the closed-form
    guess. Returns ``(extrinsics, rms_pixels)``.
    """
    if initial is None:
        initial = initial_extrinsics(gcps, intr)
    fit = fit_extrinsics(gcps, intr, initial)
    return fit.extrinsics, fit.rms


# -- intrinsics ---------------------------------------------------------------


def _normalizing_transform(pts):
    mean = pts.mean(axis=0)
    dist = np.sqrt(((pts - mean) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array([[s, 0.0, -s * mean[0]], [0.0, s, -s * mean[1]], [0.0, 0.0, 1.0]])


def homography_dlt(src, dst) -> np.ndarray:
    """Homography mapping ``src`` (N, 2) to ``dst`` (N, 2), normalized DLT."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    ts, td = _normalizing_transform(src), _normalizing_transform(dst)
    sh = np.c_[src, np.ones(len(src))] @ ts.T
    dh = np.c_[dst, np.ones(len(dst))] @ td.T
    rows = []
    for (x, y, w), (u, v, z) in zip(sh, dh):
        rows.append([0, 0, 0, -z * x, -z * y, -z * w, v * x, v * y, v * w])
        rows.append([z * x, z * y, z * w, 0, 0, 0, -u * x, -u * y, -u * w])
    _, _, vt = np.linalg.svd(np.array(rows))
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    return h / h[2, 2] if abs(h[2, 2]) > 1e-15 else h


def _v(h, i, j):
    return np.array(
        [
            h[0, i] * h[0, j],
            h[0, i] * h[1, j] + h[1, i] * h[0, j],
            h[1, i] * h[1, j],
            h[2, i] * h[0, j] + h[0, i] * h[2, j],
            h[2, i] * h[1, j] + h[1, i] * h[2, j],
            h[2, i] * h[2, j],
        ]
    )


def _closed_form_k(homographies) -> np.ndarray:
    rows = []
    for h in homographies:
        a, b = _v(h, 0, 1), _v(h, 0, 0) - _v(h, 1, 1)
        rows.append(a / np.linalg.norm(a))
        rows.append(b / np.linalg.norm(b))
    rows.append(np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))  # zero skew
    _, s, vt = np.linalg.svd(np.array(rows))
    if s[-2] < 1e-6 * s[0]:
        raise CalibrationDegenerateError(
            "target views do not constrain the intrinsics (are all target planes parallel?)"
        )
    b11, b12, b22, b13, b23, b33 = vt[-1]
    den = b11 * b22 - b12 * b12
    v0 = (b12 * b13 - b11 * b23) / den
    lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 <= 0 or lam * b11 / den <= 0:
        raise CalibrationDegenerateError("closed-form intrinsics are not positive definite")
    alpha = np.sqrt(lam / b11)
    beta = np.sqrt(lam * b11 / den)
    u0 = -b13 * alpha * alpha / lam
    return np.array([[alpha, 0.0, u0], [0.0, beta, v0], [0.0, 0.0, 1.0]])


def _pose_from_homography(k, h):
    m = np.linalg.inv(k) @ h
    scale = 1.0 / np.linalg.norm(m[:, 0])
    if m[2, 2] * scale < 0:
        scale = -scale
    r1, r2, t = scale * m[:, 0], scale * m[:, 1], scale * m[:, 2]
    rot = orthonormalize(np.c_[r1, r2, np.cross(r1, r2)])
    return rot, t


def _intrinsics_residuals(params, poses, views):
    p = _Params(*params)
    n_views = len(views)
    res_blocks, jac_blocks = [], []
    n_cols = 9 + 6 * n_views
    for k, ((rot, trans), view) in enumerate(zip(poses, views)):
        world = np.c_[view.target, np.zeros(len(view.target))]
        rw = world @ rot.T
        pc = rw + trans
        n = len(world)
        if np.any(pc[:, 2] <= BEHIND_CAMERA_Z):
            return np.full(sum(2 * len(v.target) for v in views), np.inf), np.zeros((1, n_cols))
        xy = pc[:, :2] / pc[:, 2:3]
        d = distort_normalized(xy, p)
        proj = np.stack([p.fx * d[:, 0] + p.cx, p.fy * d[:, 1] + p.cy], axis=1)
        res_blocks.append((proj - view.pixels).ravel())

        jac = np.zeros((n, 2, n_cols))
        jac[:, 0, 0] = d[:, 0]
        jac[:, 1, 1] = d[:, 1]
        jac[:, 0, 2] = 1.0
        jac[:, 1, 3] = 1.0
        jd = distortion_param_jacobian(xy, p)  # (n, 2, 5) over k1 k2 k3 p1 p2
        jac[:, 0, 4:9] = p.fx * jd[:, 0, :]
        jac[:, 1, 4:9] = p.fy * jd[:, 1, :]
        jp = camera_point_jacobian(pc, p)
        col = 9 + 6 * k
        jac[:, :, col : col + 3] = -np.einsum("nij,njk->nik", jp, np.array([skew(q) for q in rw]))
        jac[:, :, col + 3 : col + 6] = jp
        jac_blocks.append(jac.reshape(-1, n_cols))
    return np.concatenate(res_blocks), np.vstack(jac_blocks)


def fit_intrinsics(views: Sequence[PlanarView], width: int, height: int, max_iter: int = 200) -> IntrinsicsFit:
    if len(views) < MIN_VIEWS:
        raise InputError(f"at least {MIN_VIEWS} target views are required, got {len(views)}")
    for i, view in enumerate(views):
        if len(view.target) < MIN_VIEW_POINTS:
            raise InputError(f"view {i} has {len(view.target)} points, at least {MIN_VIEW_POINTS} required")

    # Condition the pixel coordinates before solving for the image of the absolute conic.
    s = float(max(width, height))
    norm = np.array([[1.0 / s, 0.0, -width / (2 * s)], [0.0, 1.0 / s, -height / (2 * s)], [0.0, 0.0, 1.0]])
    homs = [norm @ homography_dlt(v.target, v.pixels) for v in views]
    k = np.linalg.inv(norm) @ _closed_form_k(homs)
    homs_px = [np.linalg.inv(norm) @ h for h in homs]
    poses = [_pose_from_homography(k, h) for h in homs_px]

    params0 = np.array([k[0, 0], k[1, 1], k[0, 2], k[1, 2], 0.0, 0.0, 0.0, 0.0, 0.0])

    def residuals(state):
        params, poses_ = state
        return _intrinsics_residuals(params, poses_, views)

    def retract(state, delta):
        params, poses_ = state
        new_poses = []
        for i, (rot, trans) in enumerate(poses_):
            dv = delta[9 + 6 * i : 15 + 6 * i]
            new_poses.append((orthonormalize(rodrigues(dv[:3]) @ rot), trans + dv[3:]))
        return params + delta[:9], new_poses

    n_points = sum(len(v.target) for v in views)
    res = levenberg_marquardt(residuals, retract, (params0, poses), max_iter=max_iter, rms_count=n_points)
    params, poses = res.state
    fx, fy, cx, cy, k1, k2, k3, p1, p2 = (float(x) for x in params)
    intr = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height, k1=k1, k2=k2, k3=k3, p1=p1, p2=p2)

    r, _ = residuals(res.state)
    dist = np.linalg.norm(r.reshape(-1, 2), axis=1)
    view_rms, start = [], 0
    for v in views:
        chunk = dist[start : start + len(v.target)]
        view_rms.append(float(np.sqrt(np.mean(chunk**2))))
        start += len(v.target)
    return IntrinsicsFit(intr, [CameraExtrinsics(rot, t) for rot, t in poses], res.rms, view_rms)


def calibrate_intrinsics(views: Sequence[PlanarView], width: int, height: int) -> CameraIntrinsics:
    """Focal length, principal point and distortion from >= 3 views of a
    planar target.

    Per-view homographies seed a closed-form estimate (zero skew), which is
    then refined jointly with the distortion coefficients and per-view poses.
    """
    return fit_intrinsics(views, width, height).intrinsics
