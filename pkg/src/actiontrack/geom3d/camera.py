"""Pinhole camera with Brown-Conrady lens distortion.

Conventions
-----------
World frame is right-handed, z-up, meters. Camera frame follows the usual
computer-vision layout: +x right, +y down, +z along the optical axis.
Pixel coordinates place the *center* of pixel ``image[row, col]`` at
``(u, v) = (col, row)``.

The distortion map takes normalized image coordinates ``(x, y) = (X/Z, Y/Z)``
to distorted normalized coordinates::

    r2 = x^2 + y^2
    radial = 1 + k1 r2 + k2 r2^2 + k3 r2^3
    xd = x radial + 2 p1 x y + p2 (r2 + 2 x^2)
    yd = y radial + p1 (r2 + 2 y^2) + 2 p2 x y

and pixels are ``u = fx xd + cx``, ``v = fy yd + cy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, NumericError

BEHIND_CAMERA_Z = 1e-9
UNDISTORT_MAX_ITER = 50


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"sensor size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError(
                f"principal point ({self.cx}, {self.cy}) outside sensor {self.width}x{self.height}"
            )

    @property
    def distortion(self) -> np.ndarray:
        """Coefficients in OpenCV order ``(k1, k2, p1, p2, k3)``."""
        return np.array([self.k1, self.k2, self.p1, self.p2, self.k3])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def contains(self, pixel) -> bool:
        u, v = pixel
        return bool(-0.5 <= u < self.width - 0.5 and -0.5 <= v < self.height - 0.5)


@dataclass(frozen=True)
class CameraExtrinsics:
    """World-to-camera transform ``X_cam = rotation @ X_world + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float).reshape(3, 3)
        trans = np.array(self.translation, dtype=float).reshape(3)
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise InputError("rotation must be orthonormal with determinant +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @property
    def center(self) -> np.ndarray:
        """Camera optical center in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def from_center(cls, rotation, center) -> "CameraExtrinsics":
        rotation = np.asarray(rotation, dtype=float)
        return cls(rotation, -rotation @ np.asarray(center, dtype=float))

    @classmethod
    def looking(cls, center, yaw_deg=0.0, pitch_deg=0.0, roll_deg=0.0) -> "CameraExtrinsics":
        """Camera at ``center`` whose optical axis points along world +y when all
        angles are zero. Yaw turns left (counter-clockwise seen from above),
        positive pitch tilts the axis up, roll rotates about the optical axis."""
        # Camera axes in world coordinates for the neutral pose.
        base = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])  # rows: x_c, y_c, z_c
        yaw, pitch, roll = np.radians([yaw_deg, pitch_deg, roll_deg])
        rz = _axis_rotation(np.array([0.0, 0.0, 1.0]), yaw)
        rx = _axis_rotation(np.array([1.0, 0.0, 0.0]), pitch)
        cam_to_world = rz @ rx @ base.T @ _axis_rotation(np.array([0.0, 0.0, 1.0]), roll)
        return cls.from_center(orthonormalize(cam_to_world.T), center)


def _axis_rotation(axis, angle) -> np.ndarray:
    return rodrigues(np.asarray(axis, dtype=float) * angle)


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(omega) -> np.ndarray:
    """Rotation matrix of the axis-angle vector ``omega`` (radians)."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    k = skew(omega)
    if theta < 1e-8:
        # second-order series keeps the result accurate for tiny increments
        return np.eye(3) + k + 0.5 * k @ k
    return np.eye(3) + np.sin(theta) / theta * k + (1.0 - np.cos(theta)) / theta**2 * k @ k


def rotation_angle(rot_a, rot_b) -> float:
    """Angle in radians of the relative rotation between two matrices."""
    c = (np.trace(np.asarray(rot_a).T @ np.asarray(rot_b)) - 1.0) / 2.0
    s = np.linalg.norm(_vee(np.asarray(rot_a).T @ np.asarray(rot_b)))
    return float(np.arctan2(s, c))


def _vee(m):
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def orthonormalize(rot) -> np.ndarray:
    """Nearest proper rotation matrix (polar decomposition)."""
    u, _, vt = np.linalg.svd(np.asarray(rot, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


# -- distortion ---------------------------------------------------------------


def distort_normalized(xy, intr: CameraIntrinsics) -> np.ndarray:
    """Apply the distortion model to normalized coordinates of shape (..., 2)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def distortion_jacobian(xy, intr: CameraIntrinsics) -> np.ndarray:
    """d(xd, yd)/d(x, y), shape (..., 2, 2)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
    dradial = intr.k1 + r2 * (2.0 * intr.k2 + 3.0 * intr.k3 * r2)  # d radial / d r2
    jac = np.empty(xy.shape[:-1] + (2, 2))
    cross = 2.0 * x * y * dradial + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y
    jac[..., 0, 0] = radial + 2.0 * x * x * dradial + 2.0 * intr.p1 * y + 6.0 * intr.p2 * x
    jac[..., 0, 1] = cross
    jac[..., 1, 0] = cross
    jac[..., 1, 1] = radial + 2.0 * y * y * dradial + 6.0 * intr.p1 * y + 2.0 * intr.p2 * x
    return jac


def distortion_param_jacobian(xy, intr: CameraIntrinsics) -> np.ndarray:
    """d(xd, yd)/d(k1, k2, k3, p1, p2), shape (..., 2, 5)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    jac = np.empty(xy.shape[:-1] + (2, 5))
    jac[..., 0, 0] = x * r2
    jac[..., 0, 1] = x * r2 * r2
    jac[..., 0, 2] = x * r2 * r2 * r2
    jac[..., 0, 3] = 2.0 * x * y
    jac[..., 0, 4] = r2 + 2.0 * x * x
    jac[..., 1, 0] = y * r2
    jac[..., 1, 1] = y * r2 * r2
    jac[..., 1, 2] = y * r2 * r2 * r2
    jac[..., 1, 3] = r2 + 2.0 * y * y
    jac[..., 1, 4] = 2.0 * x * y
    return jac


def normalized_to_pixel(xy, intr: CameraIntrinsics) -> np.ndarray:
    d = distort_normalized(xy, intr)
    return np.stack([intr.fx * d[..., 0] + intr.cx, intr.fy * d[..., 1] + intr.cy], axis=-1)


def undistort_points(pixels, intr: CameraIntrinsics, tol: float = 1e-12):
    """Invert the distortion for an array of pixels (..., 2).

    Newton iteration on the 2x2 distortion Jacobian. Returns the normalized
    coordinates and a boolean mask of pixels that converged within
    ``UNDISTORT_MAX_ITER`` iterations to a point where the distortion map is
    orientation-preserving; other entries hold NaN.
    """
    pixels = np.asarray(pixels, dtype=float)
    target = np.stack([(pixels[..., 0] - intr.cx) / intr.fx, (pixels[..., 1] - intr.cy) / intr.fy], axis=-1)
    if intr.k1 == intr.k2 == intr.k3 == intr.p1 == intr.p2 == 0.0:
        return target, np.ones(target.shape[:-1], dtype=bool)

    xy = target.copy()
    done = np.zeros(target.shape[:-1], dtype=bool)
    for _ in range(UNDISTORT_MAX_ITER):
        resid = distort_normalized(xy, intr) - target
        err = np.abs(resid).max(axis=-1)
        done = np.isfinite(err) & (err < tol)
        if done.all():
            break
        jac = distortion_jacobian(xy, intr)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = (jac[..., 1, 1] * resid[..., 0] - jac[..., 0, 1] * resid[..., 1]) / det
            dy = (jac[..., 0, 0] * resid[..., 1] - jac[..., 1, 0] * resid[..., 0]) / det
        step = np.where(done[..., None], 0.0, np.stack([dx, dy], axis=-1))
        xy = xy - step
    else:
        resid = distort_normalized(xy, intr) - target
        err = np.abs(resid).max(axis=-1)
        done = np.isfinite(err) & (err < tol)
    # Past the fold of a strong barrel distortion the model has mirrored
    # preimages; only the orientation-preserving branch is a real ray.
    safe = np.where(done[..., None], xy, 0.0)
    r2 = (safe**2).sum(axis=-1)
    jac = distortion_jacobian(safe, intr)
    done &= 1.0 + intr.k1 * r2 + intr.k2 * r2**2 + intr.k3 * r2**3 > 0
    done &= jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0] > 0
    xy = np.where(done[..., None], xy, np.nan)
    return xy, done


def undistort(pixel, intr: CameraIntrinsics) -> np.ndarray:
    """Normalized ray direction ``(x/z, y/z)`` seen through ``pixel``."""
    xy, ok = undistort_points(np.asarray(pixel, dtype=float).reshape(1, 2), intr)
    if not ok[0]:
        u, v = np.asarray(pixel, dtype=float).ravel()
        raise NumericError(
            f"distortion inversion did not converge after {UNDISTORT_MAX_ITER} iterations at pixel ({u:.3f}, {v:.3f})",
            pixel=(u, v),
        )
    return xy[0]


# -- projection ---------------------------------------------------------------


def project(world, intr: CameraIntrinsics, extr: CameraExtrinsics):
    """Pixel of a world point, or ``None`` when the point is behind the camera."""
    pc = extr.rotation @ np.asarray(world, dtype=float) + extr.translation
    if pc[2] <= BEHIND_CAMERA_Z:
        return None
    return normalized_to_pixel(pc[:2] / pc[2], intr)


def project_points(world, intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """Vectorized :func:`project`; rows behind the camera come back as NaN."""
    world = np.atleast_2d(np.asarray(world, dtype=float))
    pc = world @ extr.rotation.T + extr.translation
    front = pc[:, 2] > BEHIND_CAMERA_Z
    out = np.full((len(world), 2), np.nan)
    if front.any():
        out[front] = normalized_to_pixel(pc[front, :2] / pc[front, 2:3], intr)
    return out


def camera_point_jacobian(pc, intr: CameraIntrinsics) -> np.ndarray:
    """d(u, v)/d(camera-frame point), shape (N, 2, 3)."""
    pc = np.atleast_2d(pc)
    z = pc[:, 2]
    xy = pc[:, :2] / z[:, None]
    dn = np.zeros((len(pc), 2, 3))
    dn[:, 0, 0] = 1.0 / z
    dn[:, 1, 1] = 1.0 / z
    dn[:, 0, 2] = -xy[:, 0] / z
    dn[:, 1, 2] = -xy[:, 1] / z
    jd = distortion_jacobian(xy, intr)
    scale = np.array([intr.fx, intr.fy])[None, :, None]
    return scale * (jd @ dn)
