import numpy as np
import pytest

from actiontrack.errors import CalibrationDegenerateError, InputError
from actiontrack.geom3d import (
    CameraExtrinsics,
    CameraIntrinsics,
    GroundControlPoint,
    PlanarView,
    calibrate_extrinsics,
    fit_extrinsics,
    fit_intrinsics,
    initial_extrinsics,
    project_points,
    rodrigues,
    rotation_angle,
)
from actiontrack.geom3d.camera import orthonormalize

from conftest import visible_ground_points


def make_gcps(intr, extr, rng, n=8, sigma=0.0, lift=True):
    pts = visible_ground_points(intr, extr, rng, n, y_range=(6, 20))
    if lift:
        # some posts and walls so the set is not coplanar
        pts[::3, 2] = rng.uniform(0.5, 2.5, size=len(pts[::3]))
    px = project_points(pts, intr, extr)
    px = px + rng.normal(scale=sigma, size=px.shape) if sigma else px
    return [GroundControlPoint(w, p) for w, p in zip(pts, px)], pts


def perturbed(extr, rng, deg=5.0, meters=0.5):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    shift = rng.normal(size=3)
    shift *= meters / np.linalg.norm(shift)
    rot = orthonormalize(rodrigues(np.radians(deg) * axis) @ extr.rotation)
    return CameraExtrinsics.from_center(rot, extr.center + shift)


def pose_error(a, b):
    return rotation_angle(a.rotation, b.rotation), float(np.linalg.norm(a.center - b.center))


# -- extrinsics ---------------------------------------------------------------


def test_extrinsics_recovers_pose_from_perturbed_start(distorted_intr, pole_camera):
    rng = np.random.default_rng(1)
    gcps, _ = make_gcps(distorted_intr, pole_camera, rng)
    fit = fit_extrinsics(gcps, distorted_intr, perturbed(pole_camera, rng))
    rot_err, pos_err = pose_error(fit.extrinsics, pole_camera)
    assert rot_err < 1e-6 and pos_err < 1e-6
    assert fit.rms < 1e-8


def test_extrinsics_residual_non_increasing(distorted_intr, pole_camera):
    rng = np.random.default_rng(2)
    gcps, _ = make_gcps(distorted_intr, pole_camera, rng, sigma=0.3)
    fit = fit_extrinsics(gcps, distorted_intr, perturbed(pole_camera, rng, 10.0, 1.0))
    hist = np.array(fit.rms_history)
    assert np.all(np.diff(hist) <= 1e-12 * hist[:-1])


def test_extrinsics_exact_start_is_fixed_point(intr, pole_camera):
    rng = np.random.default_rng(3)
    gcps, _ = make_gcps(intr, pole_camera, rng)
    fit = fit_extrinsics(gcps, intr, pole_camera)
    assert fit.rms_history[0] < 1e-9
    assert fit.rms <= fit.rms_history[0]
    rot_err, pos_err = pose_error(fit.extrinsics, pole_camera)
    assert rot_err < 1e-9 and pos_err < 1e-9


def test_extrinsics_noise_floor(intr, pole_camera):
    rng = np.random.default_rng(4)
    gcps, _ = make_gcps(intr, pole_camera, rng, n=40, sigma=0.2)
    _, rms = calibrate_extrinsics(gcps, intr, perturbed(pole_camera, rng))
    assert 0.1 <= rms <= 0.4


def test_extrinsics_needs_four_points(intr, pole_camera):
    rng = np.random.default_rng(5)
    gcps, _ = make_gcps(intr, pole_camera, rng, n=3)
    with pytest.raises(InputError, match="at least 4 ground control points"):
        fit_extrinsics(gcps, intr, pole_camera)
    with pytest.raises(InputError, match="at least 4 ground control points"):
        calibrate_extrinsics(gcps, intr)


def test_extrinsics_rejects_off_sensor_pixels(intr, pole_camera):
    rng = np.random.default_rng(6)
    gcps, _ = make_gcps(intr, pole_camera, rng)
    gcps[0] = GroundControlPoint(gcps[0].world, (intr.width + 5.0, 10.0))
    with pytest.raises(InputError):
        fit_extrinsics(gcps, intr, pole_camera)


@pytest.mark.parametrize("lift,n", [(False, 4), (False, 10), (True, 10)])
def test_closed_form_initial_pose(distorted_intr, pole_camera, lift, n):
    rng = np.random.default_rng(7)
    gcps, _ = make_gcps(distorted_intr, pole_camera, rng, n=n, lift=lift)
    guess = initial_extrinsics(gcps, distorted_intr)
    rot_err, pos_err = pose_error(guess, pole_camera)
    assert rot_err < 1e-6 and pos_err < 1e-6
    extr, rms = calibrate_extrinsics(gcps, distorted_intr)
    assert rms < 1e-8


# -- intrinsics ---------------------------------------------------------------


def target_grid(n=8, spacing=0.05):
    g = np.arange(n) * spacing
    xx, yy = np.meshgrid(g - g.mean(), g - g.mean())
    return np.c_[xx.ravel(), yy.ravel()]


def target_views(intr, rng, n_views=5, sigma=0.0, tilts=None):
    grid = target_grid()
    pts3 = np.c_[grid, np.zeros(len(grid))]
    tilts = tilts or [(rng.uniform(-35, 35), rng.uniform(-35, 35), rng.uniform(-20, 20)) for _ in range(n_views)]
    views = []
    for ax, ay, az in tilts:
        rot = rodrigues(np.radians([ax, 0, 0])) @ rodrigues(np.radians([0, ay, 0])) @ rodrigues(np.radians([0, 0, az]))
        extr = CameraExtrinsics(rot, np.array([rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.9, 1.2)]))
        px = project_points(pts3, intr, extr)
        assert np.isfinite(px).all()
        assert (px[:, 0] > 0).all() and (px[:, 0] < intr.width).all()
        views.append(PlanarView(grid, px + rng.normal(scale=sigma, size=px.shape) if sigma else px))
    return views


TRUE_K = CameraIntrinsics(fx=800.0, fy=790.0, cx=322.0, cy=238.0, width=640, height=480)


def test_intrinsics_noiseless_focal_length():
    views = target_views(TRUE_K, np.random.default_rng(10))
    fit = fit_intrinsics(views, 640, 480)
    k = fit.intrinsics
    assert abs(k.fx - 800.0) < 1e-3 and abs(k.fy - 790.0) < 1e-3
    assert abs(k.cx - 322.0) < 1e-3 and abs(k.cy - 238.0) < 1e-3
    assert fit.rms < 1e-6


def test_intrinsics_zero_distortion_recovered():
    k = fit_intrinsics(target_views(TRUE_K, np.random.default_rng(11)), 640, 480).intrinsics
    assert np.abs(k.distortion).max() < 1e-4


def test_intrinsics_with_distortion():
    truth = CameraIntrinsics(fx=800.0, fy=800.0, cx=320.0, cy=240.0, width=640, height=480, k1=-0.2, k2=0.05, p1=0.001)
    k = fit_intrinsics(target_views(truth, np.random.default_rng(12), n_views=8), 640, 480).intrinsics
    assert abs(k.fx - 800.0) < 1e-3
    assert abs(k.k1 + 0.2) < 1e-5 and abs(k.p1 - 0.001) < 1e-6


def test_intrinsics_noise_floor():
    fit = fit_intrinsics(target_views(TRUE_K, np.random.default_rng(13), sigma=0.5), 640, 480)
    assert fit.rms < 1.0
    assert len(fit.view_rms) == 5


def test_intrinsics_parallel_views_degenerate():
    rng = np.random.default_rng(14)
    # all views fronto-parallel: pure in-plane rotation and translation
    views = target_views(TRUE_K, rng, tilts=[(0, 0, az) for az in (0, 10, 20, 30)])
    with pytest.raises(CalibrationDegenerateError):
        fit_intrinsics(views, 640, 480)


def test_intrinsics_needs_three_views():
    views = target_views(TRUE_K, np.random.default_rng(15), n_views=2)
    with pytest.raises(InputError):
        fit_intrinsics(views, 640, 480)


def test_intrinsics_needs_six_points_per_view():
    views = target_views(TRUE_K, np.random.default_rng(16), n_views=3)
    views[1] = PlanarView(views[1].target[:5], views[1].pixels[:5])
    with pytest.raises(InputError):
        fit_intrinsics(views, 640, 480)
