import numpy as np
import pytest

from actiontrack.cli import main
from actiontrack.geom3d.io import format_gcps, format_planar_views, read_calibration, write_calibration
from actiontrack.records import parse_output
from actiontrack.simeval.evaluate import parse_report

from test_calibrate import TRUE_K, make_gcps, target_views

WALKER = """
[scenario]
duration_s = 8
frame_rate_hz = 10
seed = 3

[camera]
width = 640
height = 480
fx = 600
fy = 600
cx = 320
cy = 240
position = 0 0 4
pitch_deg = -15

[agent.walker]
waypoints = 0 -4 10; 8 5.6 10
"""


def simulate(tmp_path, *extra):
    out = tmp_path / "sim"
    assert main(["simulate", "--output", str(out), *extra]) == 0
    return out


def test_simulate_run_evaluate_four_agents(tmp_path, capsys):
    sim = simulate(tmp_path)
    assert main(["run", "--config", str(sim / "run.ini"), "--output", str(tmp_path / "out")]) == 0
    tracks = tmp_path / "out" / "tracks.txt"
    assert tracks.exists()
    code = main(["evaluate", "--tracks", str(tracks), "--truth", str(sim / "truth.txt"), "--output", str(tmp_path / "eval")])
    assert code == 0
    report = parse_report((tmp_path / "eval" / "metrics.txt").read_text())
    assert report["id_switches"] == "0"
    assert float(report["match_rate"]) > 0.99
    assert (tmp_path / "eval" / "confusion.png").stat().st_size > 0
    assert "id_switches 0" in capsys.readouterr().out


def test_single_walker_speed(tmp_path):
    cfg = tmp_path / "walker.ini"
    cfg.write_text(WALKER)
    sim = simulate(tmp_path, "--config", str(cfg))
    assert main(["run", "--config", str(sim / "run.ini")]) == 0
    records, frame_range = parse_output((sim / "tracks.txt").read_text())
    assert frame_range == (0, 79)
    assert {r.person_id for r in records} == {1}
    late = [r for r in records if r.timestamp_s >= 3.0]
    assert late and all(r.action == "WA" for r in late)
    assert all(abs(r.speed_kmh - 4.32) / 4.32 < 0.02 for r in late)


def test_run_empty_detections(tmp_path):
    sim = simulate(tmp_path)
    (sim / "detections.txt").write_text("# frame t class conf x y w h\n")
    assert main(["run", "--config", str(sim / "run.ini")]) == 0
    lines = (sim / "tracks.txt").read_text().splitlines()
    assert all(line.startswith("#") for line in lines)
    assert parse_output(lines)[0] == []


def test_run_missing_flow_file(tmp_path, capsys):
    sim = simulate(tmp_path)
    (sim / "flow" / "flow_000040.bin").unlink()
    assert main(["run", "--config", str(sim / "run.ini")]) == 2
    assert "flow_000040.bin" in capsys.readouterr().err


def test_run_missing_config_is_usage_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1


def test_calibrate_extrinsics_exact(tmp_path, distorted_intr, pole_camera):
    gcps, _ = make_gcps(distorted_intr, pole_camera, np.random.default_rng(7))
    (tmp_path / "gcp.txt").write_text(format_gcps(gcps))
    write_calibration(tmp_path / "intr.cal", distorted_intr)
    code = main([
        "calibrate", "extrinsics", "--input", str(tmp_path / "gcp.txt"),
        "--intrinsics", str(tmp_path / "intr.cal"), "--output", str(tmp_path / "out"),
    ])
    assert code == 0
    report = parse_report((tmp_path / "out" / "residuals.txt").read_text())
    assert report["rms_px"] == "0.0000"
    text = (tmp_path / "out" / "residuals.txt").read_text()
    exact = float(text.split("# rms_px_exact")[1].split()[0])
    assert exact < 1e-6
    assert (tmp_path / "out" / "camera.cal").exists()


def test_calibrate_extrinsics_too_few_points(tmp_path, intr, pole_camera, capsys):
    gcps, _ = make_gcps(intr, pole_camera, np.random.default_rng(8), n=3)
    (tmp_path / "gcp.txt").write_text(format_gcps(gcps))
    write_calibration(tmp_path / "intr.cal", intr)
    code = main([
        "calibrate", "extrinsics", "--input", str(tmp_path / "gcp.txt"),
        "--intrinsics", str(tmp_path / "intr.cal"), "--output", str(tmp_path / "out"),
    ])
    assert code == 1
    assert "at least 4 ground control points" in capsys.readouterr().err


def test_calibrate_intrinsics_zero_distortion(tmp_path):
    views = target_views(TRUE_K, np.random.default_rng(11))
    (tmp_path / "views.txt").write_text(format_planar_views(views))
    code = main([
        "calibrate", "intrinsics", "--input", str(tmp_path / "views.txt"),
        "--width", "640", "--height", "480", "--output", str(tmp_path / "out"),
    ])
    assert code == 0
    report = parse_report((tmp_path / "out" / "residuals.txt").read_text())
    assert float(report["fx"]) == pytest.approx(800.0, abs=1e-3)
    for k in ("k1", "k2", "k3", "p1", "p2"):
        assert abs(float(report[k])) < 1e-4
    intr, extr = read_calibration(tmp_path / "out" / "camera.cal")
    assert extr is None and intr.fy == pytest.approx(790.0, abs=1e-3)


def test_evaluate_mismatched_frame_ranges(tmp_path, capsys):
    sim = simulate(tmp_path)
    assert main(["run", "--config", str(sim / "run.ini")]) == 0
    # tracks that declare only the first 100 frames of a 750-frame run
    tracks = (sim / "tracks.txt").read_text().splitlines()
    header = [line for line in tracks if line.startswith("#")]
    body = [line for line in tracks if not line.startswith("#") and int(line.split()[0]) < 100]
    header = [line.replace("0 749", "0 99") for line in header]
    (sim / "short_tracks.txt").write_text("\n".join(header + body) + "\n")
    code = main(["evaluate", "--tracks", str(sim / "short_tracks.txt"), "--truth", str(sim / "truth.txt"), "--output", str(tmp_path / "e")])
    assert code == 1
    assert "frame range" in capsys.readouterr().err


def test_plot_empty_output(tmp_path, capsys):
    sim = simulate(tmp_path)
    (tmp_path / "empty.txt").write_text("# frame t id class action speed orient x y w h gx gy gz\n")
    code = main(["plot", "--tracks", str(tmp_path / "empty.txt"), "--frames", str(sim / "frames.txt"), "--output", str(tmp_path / "p")])
    assert code == 0
    assert not list((tmp_path / "p").glob("*.png"))
    assert "0 images" in capsys.readouterr().out


def test_plot_writes_overlays(tmp_path):
    cfg = tmp_path / "walker.ini"
    cfg.write_text(WALKER)
    sim = simulate(tmp_path, "--config", str(cfg))
    assert main(["run", "--config", str(sim / "run.ini")]) == 0
    code = main(["plot", "--tracks", str(sim / "tracks.txt"), "--frames", str(sim / "frames.txt"), "--every", "20", "--output", str(tmp_path / "p")])
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "p").glob("*.png"))
    assert names == ["overlay_000000.png", "overlay_000020.png", "overlay_000040.png", "overlay_000060.png", "speed_timeline.png"]


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fly"],
        ["simulate"],
        ["simulate", "--output", "x", "--seed", "abc"],
        ["simulate", "--output", "x", "--seed", "-1"],
        ["simulate", "--output", "x", "--scenario", "nosuch"],
        ["calibrate", "sideways", "--input", "a", "--output", "b"],
        ["evaluate", "--tracks", "t", "--truth", "u", "--output", "o", "--lag", "soon"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err
