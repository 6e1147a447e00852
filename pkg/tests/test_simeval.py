import filecmp
import math

import numpy as np
import pytest

from actiontrack.actionrules import MotionMeasures, classify
from actiontrack.errors import InputError
from actiontrack.records import OutputRecord, TruthRecord
from actiontrack.simeval.evaluate import (
    CODES,
    check_frame_ranges,
    evaluate_actions,
    evaluate_tracking,
    format_report,
    parse_report,
)
from actiontrack.simeval.scenario import (
    NoiseConfig,
    builtin_scenario,
    generate,
    loop_waypoints,
    parse_scenario,
    write_scenario,
)

CAMERA = """
[camera]
width = 640
height = 480
fx = 600
fy = 600
cx = 320
cy = 240
position = 0 0 4
pitch_deg = -15
"""


def scenario(agents, duration=4.0, rate=10.0, noise=""):
    text = f"[scenario]\nduration_s = {duration}\nframe_rate_hz = {rate}\nseed = 5\n" + CAMERA + noise + agents
    return parse_scenario(text)


STANDING = "[agent.still]\nwaypoints = 0 0.5 10; 4 0.5 10\n"
SPRINTER = "[agent.fast]\nwaypoints = 0 -5 12; 4 5 12\n"


def test_stationary_agent_constant_box_and_standing():
    gen = generate(scenario(STANDING))
    assert len(gen.frames) == 40 and len(gen.detections) == 40
    boxes = {d.bbox for _, d in gen.detections}
    assert len(boxes) == 1
    assert {r.action for r in gen.truth} == {"ST"}
    assert all(r.speed_kmh == 0.0 for r in gen.truth)
    assert all(not np.any(f.vectors) for f in gen.flows)


def test_sprinter_truth_speed_and_running():
    gen = generate(scenario(SPRINTER))
    speeds = {round(r.speed_kmh, 9) for r in gen.truth}
    assert speeds == {9.0}
    assert {r.action for r in gen.truth} == {"RU"}


def test_truth_ground_on_plane_and_bottom_center_anchor():
    cfg = scenario(SPRINTER)
    gen = generate(cfg)
    from actiontrack.geom3d import backproject_to_ground

    for r in gen.truth:
        x, y, w, h = r.bbox
        hit = backproject_to_ground((x + w / 2, y + h), cfg.intrinsics, cfg.extrinsics, cfg.ground)
        assert np.allclose(hit, r.ground, atol=1e-6)


def test_flow_moves_agent_anchor():
    cfg = scenario(SPRINTER)
    gen = generate(cfg)
    b0, b1 = gen.truth[10].bbox, gen.truth[11].bbox
    win = gen.flows[11].window(type(gen.detections[0][1].bbox)(*b0))
    du = np.median(gen.flows[11].vectors[win][..., 0]) * cfg.flow_scale
    assert du == pytest.approx((b1[0] + b1[2] / 2) - (b0[0] + b0[2] / 2), abs=1e-3)


def test_four_agent_truth_self_consistent():
    gen = generate(builtin_scenario("four_agents"))
    agents = {r.agent_id for r in gen.truth}
    assert agents == {1, 2, 3, 4}
    assert all(r.visible for r in gen.truth)
    by_agent = {a: {r.action for r in gen.truth if r.agent_id == a} for a in agents}
    assert by_agent == {1: {"ST"}, 2: {"LY"}, 3: {"WA"}, 4: {"RU"}}
    for r in gen.truth:
        assert classify(MotionMeasures(r.speed_kmh, r.orientation_deg)).code == r.action


def test_same_seed_byte_identical(tmp_path):
    cfg = scenario(STANDING + SPRINTER, noise="[noise]\njitter_px = 2\ndropout = 0.1\nfalse_positives_per_frame = 0.5\n")
    a = write_scenario(generate(cfg), tmp_path / "a")
    b = write_scenario(generate(cfg), tmp_path / "b")
    for key in ("frames", "detections", "poses", "truth", "calibration", "ground", "run"):
        assert filecmp.cmp(a[key], b[key], shallow=False), key
    cmp = filecmp.dircmp(a["flow"], b["flow"])
    assert cmp.left_list == cmp.right_list and not cmp.diff_files
    c = write_scenario(generate(cfg.with_seed(6)), tmp_path / "c")
    assert a["detections"].read_bytes() != c["detections"].read_bytes()


def test_noise_rates():
    cfg = scenario(STANDING, duration=40.0).with_noise(NoiseConfig(jitter_px=2.0, dropout=0.25, false_positives_per_frame=0.5))
    gen = generate(cfg)
    truth_box = generate(cfg.with_noise(NoiseConfig())).detections[0][1].bbox
    real = [d for _, d in gen.detections if d.confidence == 0.9]
    fake = [d for _, d in gen.detections if d.confidence != 0.9]
    assert 0.65 < len(real) / 400 < 0.85
    assert 0.35 < len(fake) / 400 < 0.65
    dx = np.array([d.bbox.x - truth_box.x for d in real])
    assert 1.6 < dx.std() < 2.4


def test_loop_waypoints_constant_speed():
    wp = loop_waypoints(0.0, 0.0, 2.0, 1.5, 12, 20.0)
    assert wp[0][0] == 0.0 and wp[-1][0] == 20.0
    for (t0, x0, y0), (t1, x1, y1) in zip(wp, wp[1:]):
        assert math.hypot(x1 - x0, y1 - y0) / (t1 - t0) == pytest.approx(1.5)


def test_scenario_config_errors():
    with pytest.raises(InputError):
        scenario("[agent.bad]\nwaypoints = 0 0 10; 9 1 10\n")  # beyond duration
    with pytest.raises(InputError):
        scenario("[agent.bad]\nwaypoints = 2 0 10; 1 1 10\n")
    with pytest.raises(InputError):
        scenario("[agent.bad]\nwaypoints = 0 0 10\nposture = 0 sitting\n")
    with pytest.raises(InputError):
        scenario("")  # no agents
    with pytest.raises(InputError):
        parse_scenario("[scenario]\nduration_s = 1\n")


# -- evaluation ---------------------------------------------------------------


def truth_track(agent, n=50, rate=10.0, action="WA", speed=3.6, start=(0.0, 0.0), velocity=(1.0, 0.0)):
    out = []
    for f in range(n):
        t = f / rate
        g = (start[0] + velocity[0] * t, start[1] + velocity[1] * t, 0.0)
        out.append(TruthRecord(f, t, agent, True, action if isinstance(action, str) else action(t), speed, 90.0, (0, 0, 10, 30), g))
    return out


def echo(truth, pid=lambda r: r.agent_id, action=lambda r: r.action):
    return [
        OutputRecord(r.frame_index, r.timestamp_s, pid(r), "human", action(r), r.speed_kmh, 90.0, r.bbox, r.ground)
        for r in truth
    ]


def test_perfect_run():
    truth = truth_track(1)
    tm = evaluate_tracking(echo(truth), truth)
    assert tm.id_switches == 0 and tm.fragmentations == 0
    assert tm.match_rate == 1.0 and tm.mean_ground_error_m < 1e-6
    am = evaluate_actions(echo(truth), truth, 3.0)
    assert am.accuracy == 1.0
    assert am.confusion[CODES.index("WA"), CODES.index("WA")] == 50 and am.confusion.sum() == 50


def test_swap_mid_run_is_one_switch():
    truth = truth_track(1)
    out = echo(truth, pid=lambda r: 1 if r.frame_index < 25 else 7)
    tm = evaluate_tracking(out, truth)
    assert tm.id_switches == 1 and tm.switches_per_agent == {1: 1} and tm.fragmentations == 0


def test_two_agents_crossing_ids_kept():
    a = truth_track(1, start=(0.0, 0.0), velocity=(1.0, 0.0))
    b = truth_track(2, start=(4.9, 0.3), velocity=(-1.0, 0.0))
    tm = evaluate_tracking(echo(a) + echo(b), a + b)
    assert tm.id_switches == 0 and tm.match_rate == 1.0


def test_empty_output():
    truth = truth_track(1)
    tm = evaluate_tracking([], truth)
    assert tm.match_rate == 0.0 and tm.id_switches == 0 and math.isnan(tm.mean_ground_error_m)
    assert evaluate_actions([], truth, 3.0).counted == 0


def test_gate_and_fragmentation():
    truth = truth_track(1)
    out = [r for r in echo(truth) if not 20 <= r.frame_index < 25]
    far = [
        OutputRecord(r.frame_index, r.timestamp_s, 1, "human", "WA", 1.0, 90.0, r.bbox, (r.ground[0] + 1.5, r.ground[1], 0.0))
        for r in truth[30:35]
    ]
    out = [r for r in out if not 30 <= r.frame_index < 35] + far
    tm = evaluate_tracking(out, truth)
    assert tm.fragmentations == 2 and tm.id_switches == 0
    assert tm.match_rate == pytest.approx(40 / 50)


def transition(t):
    return "ST" if t < 2.0 else "WA"


def test_lagging_prediction_within_tolerance():
    truth = truth_track(1, n=60, action=transition)
    # predictions switch 2 s after the truth does
    out = echo(truth, action=lambda r: "ST" if r.timestamp_s < 4.0 else "WA")
    assert evaluate_actions(out, truth, 3.0).accuracy == 1.0
    strict = evaluate_actions(out, truth, 0.0)
    assert strict.correct == 60 - 20
    assert strict.confusion[CODES.index("WA"), CODES.index("ST")] == 20


def test_unknown_excluded_only_in_first_window():
    truth = truth_track(1, n=50)
    out = echo(truth, action=lambda r: "UN" if r.timestamp_s < 3.5 else "WA")
    am = evaluate_actions(out, truth, 3.0, window_s=3.0)
    assert am.counted == 50 - 30
    assert am.correct == 15
    assert am.confusion[CODES.index("WA"), CODES.index("UN")] == 5


def test_report_format_round_trip():
    truth = truth_track(1)
    report = format_report(evaluate_tracking(echo(truth), truth), evaluate_actions(echo(truth), truth, 3.0))
    values = parse_report(report)
    assert values["id_switches"] == "0" and values["match_rate"] == "1.0000"
    assert values["action_accuracy"] == "1.0000" and values["accuracy_ST"] == "-"
    assert "# confusion rows=truth cols=predicted ST WA RU LY UN" in report


def test_frame_range_check():
    check_frame_ranges((0, 10), (0, 10))
    check_frame_ranges(None, (0, 10))
    with pytest.raises(InputError):
        check_frame_ranges((0, 9), (0, 10))
    with pytest.raises(InputError):
        evaluate_actions([], [], -1.0)
