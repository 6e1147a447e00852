import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actiontrack.errors import InputError, NumericError
from actiontrack.geom3d import (
    CameraExtrinsics,
    CameraIntrinsics,
    Plane,
    TriangleMesh,
    backproject_points,
    backproject_to_ground,
    build_ground_lookup,
    ground_point_below,
    lookup_reprojection_error,
    normalized_to_pixel,
    project,
    project_points,
    rodrigues,
    undistort,
    undistort_points,
)
from actiontrack.geom3d.camera import orthonormalize

from conftest import visible_ground_points


def nadir(height=5.0):
    return CameraExtrinsics.looking((0.0, 0.0, height), 0.0, -90.0, 0.0)


# -- projection -------------------------------------------------------------


def test_optical_axis_maps_to_principal_point(intr):
    extr = CameraExtrinsics()
    assert np.allclose(project([0.0, 0.0, 5.0], intr, extr), [intr.cx, intr.cy], atol=1e-12)


def test_pinhole_hand_evaluation():
    intr = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0, width=200, height=200)
    assert np.allclose(project([1.0, 0.0, 2.0], intr, CameraExtrinsics()), [50.0, 0.0], atol=1e-12)


def test_behind_camera_marker(intr):
    assert project([0.0, 0.0, -1.0], intr, CameraExtrinsics()) is None
    assert project([0.0, 0.0, 1e-10], intr, CameraExtrinsics()) is None
    pts = project_points(np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 2.0]]), intr, CameraExtrinsics())
    assert np.isnan(pts[0]).all() and np.allclose(pts[1], [intr.cx, intr.cy])


def test_looking_camera_axes(pole_camera):
    # optical axis points along +y, tilted down by 15 degrees
    axis = pole_camera.rotation[2]
    assert np.allclose(axis, [0.0, np.cos(np.radians(15)), -np.sin(np.radians(15))], atol=1e-12)
    assert np.allclose(pole_camera.center, [0.0, 0.0, 4.0])


def test_extrinsics_validation():
    with pytest.raises(InputError):
        CameraExtrinsics(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(InputError):
        CameraExtrinsics(np.eye(3) * 1.001, np.zeros(3))


def test_intrinsics_validation():
    with pytest.raises(InputError):
        CameraIntrinsics(fx=0, fy=100, cx=10, cy=10, width=20, height=20)
    with pytest.raises(InputError):
        CameraIntrinsics(fx=100, fy=100, cx=20, cy=10, width=20, height=20)


def test_rodrigues_and_orthonormalize():
    rng = np.random.default_rng(3)
    for _ in range(20):
        w = rng.normal(size=3)
        r = rodrigues(w)
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(r), 1.0)
        noisy = r + 1e-6 * rng.normal(size=(3, 3))
        fixed = orthonormalize(noisy)
        assert np.abs(fixed.T @ fixed - np.eye(3)).max() < 1e-12


# -- distortion -------------------------------------------------------------


def test_undistort_zero_distortion():
    intr = CameraIntrinsics(fx=100, fy=120, cx=320, cy=240, width=640, height=480)
    assert np.allclose(undistort((intr.cx + intr.fx, intr.cy), intr), [1.0, 0.0], atol=1e-15)
    assert np.allclose(undistort((intr.cx, intr.cy), intr), [0.0, 0.0], atol=1e-15)


def test_undistort_principal_point_with_distortion(distorted_intr):
    assert np.allclose(undistort((distorted_intr.cx, distorted_intr.cy), distorted_intr), [0.0, 0.0], atol=1e-15)


def test_undistort_round_trip_k1(intr, pole_camera, ground_plane):
    k = CameraIntrinsics(fx=600, fy=600, cx=320, cy=240, width=640, height=480, k1=0.1)
    rng = np.random.default_rng(11)
    pts = visible_ground_points(k, pole_camera, rng, 200)
    pc = pts @ pole_camera.rotation.T + pole_camera.translation
    xy = pc[:, :2] / pc[:, 2:]
    back, ok = undistort_points(project_points(pts, k, pole_camera), k)
    assert ok.all()
    assert np.abs(back - xy).max() < 1e-6


def test_undistort_reports_non_convergence():
    # strong barrel distortion folds the image; pixels past the fold have no preimage
    k = CameraIntrinsics(fx=100, fy=100, cx=50, cy=50, width=100, height=100, k1=-2.0)
    with pytest.raises(NumericError) as info:
        undistort((99.0, 99.0), k)
    assert info.value.pixel == (99.0, 99.0)
    assert "99.000" in str(info.value)


@settings(max_examples=60, deadline=None)
@given(
    k1=st.floats(-0.5, 0.5),
    k2=st.floats(-0.1, 0.1),
    p1=st.floats(-0.002, 0.002),
    p2=st.floats(-0.002, 0.002),
    x=st.floats(-0.45, 0.45),
    y=st.floats(-0.35, 0.35),
)
def test_distort_undistort_inverse(k1, k2, p1, p2, x, y):
    k = CameraIntrinsics(fx=600, fy=600, cx=320, cy=240, width=640, height=480, k1=k1, k2=k2, p1=p1, p2=p2)
    px = normalized_to_pixel(np.array([[x, y]]), k)  # distorts, then applies fx/fy/cx/cy
    xy, ok = undistort_points(px, k)
    assert ok.all()
    again = normalized_to_pixel(xy, k)
    assert np.abs(again - px).max() < 1e-6
    assert np.abs(xy - [x, y]).max() < 1e-9


# -- ground -----------------------------------------------------------------


def test_nadir_ray_hits_origin(intr, ground_plane):
    hit = backproject_to_ground((intr.cx, intr.cy), intr, nadir(), ground_plane)
    assert np.allclose(hit, [0.0, 0.0, 0.0], atol=1e-12)


def test_sky_facing_ray_misses(intr, ground_plane):
    up = CameraExtrinsics.looking((0.0, 0.0, 5.0), 0.0, 60.0, 0.0)
    assert backproject_to_ground((intr.cx, intr.cy), intr, up, ground_plane) is None


def test_parallel_ray_misses(intr, ground_plane):
    level = CameraExtrinsics.looking((0.0, 0.0, 5.0), 0.0, 0.0, 0.0)
    assert backproject_to_ground((intr.cx, intr.cy), intr, level, ground_plane) is None


def test_project_backproject_round_trip(distorted_intr, pole_camera, ground_plane):
    rng = np.random.default_rng(5)
    pts = visible_ground_points(distorted_intr, pole_camera, rng, 100, y_range=(6, 25))
    back = backproject_points(project_points(pts, distorted_intr, pole_camera), distorted_intr, pole_camera, ground_plane)
    assert np.abs(back - pts).max() < 1e-6


def test_sloped_plane_round_trip(intr, pole_camera):
    n = np.array([0.0, -0.1, 1.0])
    plane = Plane([0.0, 10.0, 0.0], n / np.linalg.norm(n))
    pts = np.array([ground_point_below(plane, x, y) for x, y in [(0, 8), (1.5, 12), (-2, 15)]])
    back = backproject_points(project_points(pts, intr, pole_camera), intr, pole_camera, plane)
    assert np.abs(back - pts).max() < 1e-9


def test_plane_validation():
    with pytest.raises(InputError):
        Plane([0, 0, 0], [0, 0, 2])


def test_mesh_nearest_hit_and_tie_break():
    # two stacked squares: z=1 is nearer to a camera above
    verts = np.array(
        [[-5, -5, 0], [5, -5, 0], [5, 5, 0], [-5, 5, 0], [-5, -5, 1], [5, -5, 1], [5, 5, 1], [-5, 5, 1]], dtype=float
    )
    faces = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    mesh = TriangleMesh(verts, faces)
    intr = CameraIntrinsics(fx=100, fy=100, cx=50, cy=50, width=101, height=101)
    hit = backproject_to_ground((50.0, 50.0), intr, nadir(10.0), mesh)
    assert np.allclose(hit, [0.0, 0.0, 1.0], atol=1e-12)
    # the center ray runs along the shared diagonal edge of the top square
    from actiontrack.geom3d.ground import _mesh_ray_params

    s = _mesh_ray_params(np.array([0.0, 0.0, 10.0]), np.array([[0.0, 0.0, -1.0]]), mesh)
    assert np.isclose(s[0], 9.0)


def test_mesh_miss_and_ground_point_below():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert ground_point_below(mesh, 5.0, 5.0) is None
    assert np.allclose(ground_point_below(mesh, 0.2, 0.2), [0.2, 0.2, 0.0])


def test_mesh_validation():
    with pytest.raises(InputError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(InputError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_plane_and_equivalent_mesh_agree(intr, pole_camera, ground_plane):
    mesh = TriangleMesh([[-50, 0, 0], [50, 0, 0], [50, 100, 0], [-50, 100, 0]], [[0, 1, 2], [0, 2, 3]])
    px = np.array([[100.0, 300.0], [320.0, 240.0], [600.0, 470.0]])
    a = backproject_points(px, intr, pole_camera, ground_plane)
    b = backproject_points(px, intr, pole_camera, mesh)
    assert np.allclose(a, b, atol=1e-9)


# -- lookup table -----------------------------------------------------------


def test_lookup_center_entry_nadir(ground_plane):
    intr = CameraIntrinsics(fx=100, fy=100, cx=32, cy=24, width=64, height=48)
    table = build_ground_lookup(intr, nadir(), ground_plane)
    assert table.shape == (48, 64)
    assert np.allclose(table.lookup((32, 24)), [0.0, 0.0, 0.0], atol=1e-12)
    assert table.lookup((-3, 0)) is None


def test_lookup_sky_camera_all_invalid(ground_plane):
    intr = CameraIntrinsics(fx=100, fy=100, cx=32, cy=24, width=64, height=48)
    table = build_ground_lookup(intr, CameraExtrinsics.looking((0, 0, 5), 0, 70, 0), ground_plane)
    assert not table.valid.any()
    assert table.lookup((10, 10)) is None


def test_lookup_reprojection_invariant(ground_plane):
    intr = CameraIntrinsics(fx=160, fy=160, cx=80, cy=60, width=160, height=120, k1=-0.2, k2=0.03)
    extr = CameraExtrinsics.looking((0, 0, 4), 10, -5, 0)  # horizon in view: some entries invalid
    table = build_ground_lookup(intr, extr, ground_plane)
    assert table.valid.any() and not table.valid.all()
    err = lookup_reprojection_error(table, intr, extr)
    assert np.nanmax(err) < 0.5
    assert np.nanmax(err) < 1e-6
