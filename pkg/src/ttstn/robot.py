"""Autonomous-robot demo cluster and its coordination properties.

Thirteen nodes on one 9600 bps bus with a 30 ms cycle: three sweeping
infrared rangers, two ultrasonic sounders, odometry, three servo
sweepers, speed and steering actuators, a navigation node, and the
master. The shipped schedule encodes three coordination claims, each
checked from the recorded task activations after a run:

  a) the two ultrasonic sounders are never measuring at the same time
     (their trigger slots are phase shifted farther than worst-case
     clock drift can close);
  b) each infrared measurement has a servo position pushed in the same
     cycle, so readings can be attributed to a bearing;
  c) the odometry-to-drive delay is the same in every cycle (the
     actuator fires on round start, one cycle after the measurement it
     consumes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Tuple

from .config import Cluster, ClusterSpec, build_cluster, load_spec
from .nodes import SlotTrigger
from .timing import NS_PER_SEC, div_round_half_up

US_NODES = ("US1", "US2")
IR_SERVO_PAIRS = (("IR1", "Serv1"), ("IR2", "Serv2"), ("IR3", "Serv3"))
SPEED_SENSOR = ("Pos", "measure")
SPEED_ACTUATOR = ("Speed", "drive")


def data_config_path(name: str):
    return resources.files("ttstn").joinpath("data", "configs", name)


def load_robot_spec() -> ClusterSpec:
    with resources.as_file(data_config_path("robot.cfg")) as path:
        return load_spec(path)


def overlap_variant(spec: ClusterSpec) -> ClusterSpec:
    """Break the sounder phase offset: US2 triggers right behind US1.

    The nominal windows then touch, and opposing clock drifts push them
    into genuine overlap; the window check must catch this.
    """
    for task in spec.node("US2").tasks:
        if task.name == "ping":
            task.trigger = SlotTrigger(task.trigger.round_id, 3)
    return spec


def _window_duration_ns(cluster: Cluster, node_name: str, width_slots: int) -> int:
    # the sensor is active for `width` slots of its own clock
    ppb = cluster.slaves[node_name].clock.drift_ppb
    local = width_slots * cluster.sim.slot_ns
    return div_round_half_up(local * NS_PER_SEC, NS_PER_SEC + ppb)


@dataclass
class DemoReport:
    cycles: int
    failures: List[str] = field(default_factory=list)
    us_windows_checked: int = 0
    ir_pairs_checked: int = 0
    speed_delay_ns: int = -1
    collisions: int = 0
    violations: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


def check_us_windows(cluster: Cluster, report: DemoReport) -> None:
    widths = {}
    for name in US_NODES:
        for task in cluster.slaves[name].tasks:
            if "width" in task.meta:
                widths[name] = int(task.meta["width"])
    windows: Dict[int, List[Tuple[str, int, int]]] = {}
    for act in cluster.sim.task_log:
        if act.node in widths:
            end = act.time_ns + _window_duration_ns(cluster, act.node, widths[act.node])
            windows.setdefault(act.cycle, []).append((act.node, act.time_ns, end))
    for cycle, spans in sorted(windows.items()):
        spans.sort(key=lambda w: w[1])
        report.us_windows_checked += 1
        for (na, sa, ea), (nb, sb, eb) in zip(spans, spans[1:]):
            if sb < ea:
                report.failures.append(
                    f"ultrasonic overlap in cycle {cycle}: {na} active until "
                    f"{ea} ns, {nb} starts at {sb} ns ({ea - sb} ns overlap)")


def check_ir_servo_pairs(cluster: Cluster, report: DemoReport) -> None:
    pushes: Dict[Tuple[str, int], int] = {}
    for act in cluster.sim.task_log:
        pushes[(act.node, act.cycle)] = pushes.get((act.node, act.cycle), 0) + 1
    cycles = sorted({c for (_n, c) in pushes})
    for cycle in cycles:
        for ir, servo in IR_SERVO_PAIRS:
            has_ir = (ir, cycle) in pushes
            has_servo = (servo, cycle) in pushes
            if has_ir != has_servo:
                report.failures.append(
                    f"cycle {cycle}: {ir} measurement and {servo} position "
                    f"are not paired (ir={has_ir}, servo={has_servo})")
            if has_ir:
                report.ir_pairs_checked += 1


def check_speed_delay(cluster: Cluster, report: DemoReport) -> None:
    measures = {}
    actuations = {}
    for act in cluster.sim.task_log:
        if (act.node, act.task) == SPEED_SENSOR:
            measures[act.cycle] = act.time_ns
        elif (act.node, act.task) == SPEED_ACTUATOR:
            actuations[act.cycle] = act.time_ns
    delays = sorted(
        (cycle, actuations[cycle + 1] - t)
        for cycle, t in measures.items() if cycle + 1 in actuations)
    if not delays:
        report.failures.append("no measurement/actuation pairs recorded")
        return
    report.speed_delay_ns = delays[0][1]
    for cycle, delay in delays:
        if delay != report.speed_delay_ns:
            report.failures.append(
                f"speed-loop delay jitter: cycle {cycle} saw {delay} ns, "
                f"cycle {delays[0][0]} saw {report.speed_delay_ns} ns")


def run_demo(cycles: int = 1000, spec: ClusterSpec = None) -> DemoReport:
    if spec is None:
        spec = load_robot_spec()
    cluster = build_cluster(spec)
    cluster.run_cycles(cycles)
    report = DemoReport(cycles=cycles,
                        collisions=cluster.sim.collisions,
                        violations=len(cluster.sim.violations))
    if report.collisions:
        report.failures.append(f"{report.collisions} collisions on the bus")
    if report.violations:
        report.failures.append(f"{report.violations} slot-boundary violations")
    check_us_windows(cluster, report)
    check_ir_servo_pairs(cluster, report)
    check_speed_delay(cluster, report)
    return report
