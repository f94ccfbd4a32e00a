"""Robot demo cluster: packaged schedule and its coordination claims."""

import pytest

from ttstn import robot


def test_data_config_path_resolves_packaged_files():
    for name in ("table1.cfg", "robot.cfg", "baptize-demo.cfg"):
        assert robot.data_config_path(name).is_file(), name


def test_demo_run_is_clean():
    report = robot.run_demo(cycles=50)
    assert report.ok, report.failures
    assert report.cycles == 50
    assert report.collisions == 0
    assert report.violations == 0
    assert report.us_windows_checked == 50
    assert report.ir_pairs_checked == 3 * 50
    assert report.speed_delay_ns == 29687655


def test_speed_delay_is_under_one_cycle():
    report = robot.run_demo(cycles=20)
    assert 0 < report.speed_delay_ns < 30_000_000


def test_overlap_variant_is_caught():
    spec = robot.overlap_variant(robot.load_robot_spec())
    report = robot.run_demo(cycles=50, spec=spec)
    assert not report.ok
    assert all("ultrasonic overlap" in f for f in report.failures)
    assert len(report.failures) == 50  # every cycle overlaps


def test_overlap_variant_only_moves_one_trigger():
    spec = robot.overlap_variant(robot.load_robot_spec())
    ping = next(t for t in spec.node("US2").tasks if t.name == "ping")
    assert (ping.trigger.round_id, ping.trigger.slot) == (0, 3)
    other = next(t for t in spec.node("US1").tasks if t.name == "ping")
    assert (other.trigger.round_id, other.trigger.slot) == (0, 1)
