"""Whole-cluster behavior of the shipped four-node example config."""

import io

from ttstn.bus import format_trace
from ttstn.schedule import slot_duration_ns

from conftest import GOLDEN


def rows(cluster, cycle, kind=None):
    out = [r for r in cluster.sim.trace if r.cycle == cycle]
    if kind:
        out = [r for r in out if r.kind == kind]
    return out


def test_per_cycle_pattern(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(3)
    for cycle in range(3):
        got = [(r.slot, r.actor, r.kind) for r in rows(cl, cycle)]
        assert got == [
            (0, "M", "delivered"),                    # fireworks
            (1, "M", "delivered"), (2, "M", "delivered"), (3, "M", "delivered"),
            (4, "1", "delivered"), (5, "1", "delivered"),
            (6, "2", "exec"),
            (9, "1", "delivered"), (10, "1", "delivered"),
            (11, "1", "delivered"), (12, "1", "delivered"),
        ]


def test_schedule_boundaries_scale_like_the_published_table(table1_cluster):
    # the four schedule entries sit at minute marks 0/3/5/8 with the last
    # ending at 12; one minute maps to one slot, offset by the fireworks slot
    cl = table1_cluster
    cl.run_cycles(1)
    slot = slot_duration_ns(cl.spec.baud)
    origin = 1 * slot  # pattern starts after the fireworks slot
    by_actor = {}
    for r in rows(cl, 0):
        by_actor.setdefault((r.actor, r.kind), []).append(r)
    a_first = by_actor[("M", "delivered")][1]       # row 0 is the fireworks
    b_first = by_actor[("1", "delivered")][0]
    c_exec = by_actor[("2", "exec")][0]
    b_second = by_actor[("1", "delivered")][2]
    b_last = by_actor[("1", "delivered")][-1]
    assert a_first.slot * slot == origin + 0 * slot
    assert b_first.slot * slot == origin + 3 * slot
    assert c_exec.slot * slot == origin + 5 * slot
    assert b_second.slot * slot == origin + 8 * slot
    assert (b_last.slot + 1) * slot == origin + 12 * slot


def test_cycles_are_exactly_periodic(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(3)
    fireworks = [r for r in cl.sim.trace if r.slot == 0]
    assert [f.time_ns for f in fireworks] == [0, 20_000_000, 40_000_000]
    # every row repeats shifted by exactly one cycle
    base = [(r.time_ns, r.slot, r.actor, r.byte, r.kind) for r in rows(cl, 0)]
    for cycle in (1, 2):
        shifted = [(r.time_ns - cycle * 20_000_000, r.slot, r.actor, r.byte, r.kind)
                   for r in rows(cl, cycle)]
        assert shifted == base


def test_no_collisions_or_violations(table1_cluster):
    table1_cluster.run_cycles(3)
    assert table1_cluster.sim.collisions == 0
    assert table1_cluster.sim.violations == []


def test_master_mirrors_published_records(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(1)
    # B's 4-byte record lands in the master's mirror of 3:1
    assert cl.master.ifs.pull_record(3, 1) == bytes.fromhex("b3b4b5b6")
    assert cl.master.stamps[(3, 1)] == 0


def test_executed_task_logged(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(2)
    execs = [t for t in cl.sim.task_log if t.task == "work"]
    assert [t.cycle for t in execs] == [0, 1]
    assert all(t.node == "C" for t in execs)


def test_matches_committed_golden_trace(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(3)
    buf = io.StringIO()
    cl.sim.export_trace(buf)
    assert buf.getvalue() == (GOLDEN / "table1.trace").read_text()


def test_drift_shifts_stay_inside_the_guard(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(3)
    slot = slot_duration_ns(cl.spec.baud)
    for r in cl.sim.trace:
        if r.kind != "delivered":
            continue
        nominal = (r.cycle * 20_000_000) + r.slot * slot
        assert abs(r.time_ns - nominal) <= cl.sim.guard_ns


def test_trace_format_roundtrips_through_export(table1_cluster):
    cl = table1_cluster
    cl.run_cycles(1)
    text = format_trace(cl.sim.trace, cl.spec.baud)
    lines = text.splitlines()
    assert lines[0] == "# ttstn-trace v1, baud=9600"
    for line, rec in zip(lines[1:], cl.sim.trace):
        t, cy, rid, slot, actor, byte, kind = line.split(",")
        assert (int(t), int(cy), int(rid), int(slot)) == (
            rec.time_ns, rec.cycle, rec.round_id, rec.slot)
        assert actor == rec.actor and kind == rec.kind
