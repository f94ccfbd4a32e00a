"""Round descriptors, cycle layout, and the static conflict scan."""

import pytest

from ttstn import errors
from ttstn.schedule import (
    ActionKind,
    ClusterSchedule,
    MS_ADDRESS_ROUND,
    MS_DATA_ROUND,
    MS_ROUND_SLOTS,
    RecordRef,
    Rodl,
    RodlEntry,
    SlotAction,
    build_rodl,
    frame_duration_ns,
    guard_ns,
    recommended_schedule,
    round_gap_ns,
    slot_duration_ns,
    validate_schedule,
)
from ttstn.timing import bit_time_ns


# -- timing oracles ------------------------------------------------------------
# Durations are exact integer multiples of the rounded bit time; the
# reference values below were computed by hand from 1e9/baud with
# half-up rounding, times 10 bits per UART frame and 13 per slot.

@pytest.mark.parametrize("baud,bit", [
    (9600, 104167),    # 104166.67 rounds up
    (19200, 52083),    # 52083.33 rounds down
    (1000, 1000000),
    (3, 333333333),    # 333333333.3
])
def test_bit_time_reference_values(baud, bit):
    assert bit_time_ns(baud) == bit


def test_durations_scale_from_bit_time():
    for baud in (9600, 19200, 38400, 123):
        bit = bit_time_ns(baud)
        assert frame_duration_ns(baud) == 10 * bit
        assert slot_duration_ns(baud) == 13 * bit
        assert round_gap_ns(baud) == 6 * bit
        assert guard_ns(baud) == 3 * bit


def test_bad_baud_rejected():
    with pytest.raises(errors.RangeError):
        bit_time_ns(0)
    with pytest.raises(errors.RangeError):
        bit_time_ns(-9600)


# -- descriptor construction -----------------------------------------------------

def send(slot, actor, file, record, length=1):
    return RodlEntry(slot, actor, SlotAction(ActionKind.SEND, RecordRef(file, record), length))


def recv(slot, actor, file, record, length=1):
    return RodlEntry(slot, actor, SlotAction(ActionKind.RECEIVE, RecordRef(file, record), length))


def execute(slot, actor, file, record):
    return RodlEntry(slot, actor, SlotAction(ActionKind.EXECUTE, RecordRef(file, record)))


def test_build_rodl_sorts_and_sizes():
    rodl = build_rodl(0, [send(4, "B", 3, 0), send(1, "A", 3, 0, length=3)])
    assert [e.slot for e in rodl.entries] == [1, 4]
    # length counts the fireworks slot 0 plus payload slots 1..4
    assert rodl.round_length_slots == 5


def test_one_sender_per_slot_named_in_error():
    with pytest.raises(errors.SlotConflictError) as exc:
        build_rodl(0, [send(2, "A", 3, 0), send(2, "B", 3, 0)])
    assert "slot 2" in str(exc.value)
    assert "A" in str(exc.value) and "B" in str(exc.value)


def test_overlapping_send_spans_conflict():
    # A's 3-byte send covers slots 1..3; B lands inside it
    with pytest.raises(errors.SlotConflictError) as exc:
        build_rodl(0, [send(1, "A", 3, 0, length=3), send(3, "B", 3, 0)])
    assert "slot 3" in str(exc.value)


def test_receive_and_execute_share_slots_freely():
    rodl = build_rodl(0, [send(1, "A", 3, 0), recv(1, "B", 4, 0),
                          recv(1, "C", 4, 0), execute(2, "B", 3, 1)])
    assert rodl.round_length_slots == 3
    assert [e.actor for e in rodl.entries_for("B")] == ["B", "B"]


def test_entry_past_round_length_rejected():
    with pytest.raises(errors.ScheduleError):
        build_rodl(0, [send(3, "A", 3, 0, length=2)], round_length_slots=3)


def test_slot_zero_is_reserved():
    with pytest.raises(errors.RangeError):
        send(0, "A", 3, 0)


def test_execute_is_single_slot():
    with pytest.raises(errors.ScheduleError):
        SlotAction(ActionKind.EXECUTE, RecordRef(3, 0), length_slots=2)


def test_ms_rounds_not_buildable_as_mp():
    with pytest.raises(errors.RangeError):
        build_rodl(6, [send(1, "A", 3, 0)])


# -- cycle layout ----------------------------------------------------------------

def test_sequence_grammar():
    ClusterSchedule([0, 6, 7], 30_000_000)
    with pytest.raises(errors.ScheduleError):
        ClusterSchedule([0, 6], 30_000_000)          # address without data
    with pytest.raises(errors.ScheduleError):
        ClusterSchedule([7, 6], 30_000_000)          # data first
    with pytest.raises(errors.RangeError):
        ClusterSchedule([9], 30_000_000)
    with pytest.raises(errors.ScheduleError):
        ClusterSchedule([], 30_000_000)


def test_layout_offsets_and_overflow():
    rodl = build_rodl(0, [send(1, "A", 3, 0)], round_length_slots=9)
    sched = ClusterSchedule([0, 6, 7], 30_000_000)
    placed = sched.layout({0: rodl}, 9600)
    slot = slot_duration_ns(9600)
    gap = round_gap_ns(9600)
    assert placed[0] == (0, 0, 9)
    assert placed[1] == (MS_ADDRESS_ROUND, 9 * slot + gap, MS_ROUND_SLOTS)
    assert placed[2][1] == 9 * slot + gap + MS_ROUND_SLOTS * slot + gap
    # 21 slots + 2 gaps = 285 bit times; at 9600 that is 29.7 ms of 30
    span = placed[2][1] + MS_ROUND_SLOTS * slot
    assert span == 285 * bit_time_ns(9600)

    with pytest.raises(errors.CycleOverflowError):
        ClusterSchedule([0, 6, 7], span - 1).layout({0: rodl}, 9600)


def test_layout_requires_descriptor():
    sched = ClusterSchedule([0], 30_000_000)
    with pytest.raises(errors.ScheduleError):
        sched.layout({}, 9600)


def test_recommended_schedule_interleaves_maintenance():
    sched = recommended_schedule([0, 1, 2], ms_interleave=2, cycle_ns=10**9)
    assert sched.sequence == [0, 1, 6, 7, 2]
    assert sched.ms_rounds_per_cycle == 1
    # when the interleave never triggers, one transaction is appended
    sparse = recommended_schedule([0], ms_interleave=5, cycle_ns=10**9)
    assert sparse.sequence == [0, 6, 7]
    dense = recommended_schedule([0, 1], ms_interleave=1, cycle_ns=10**9)
    assert dense.sequence == [0, 6, 7, 1, 6, 7]
    assert dense.ms_rounds_per_cycle == 2


# -- static conflict scan ----------------------------------------------------------

FILES = {"A": {3: 2}, "B": {3: 2}, "M": {3: 8}}


def report_codes(report):
    return sorted(f.code for f in report.findings)


def test_validate_clean():
    rodl = build_rodl(0, [send(1, "A", 3, 0), recv(1, "M", 3, 0)])
    report = validate_schedule({0: rodl}, ClusterSchedule([0, 6, 7], 30_000_000),
                               9600, FILES)
    assert report.ok and not report.findings


def test_validate_flags_unknown_actor_and_dangling_record():
    rodl = Rodl(0, [send(1, "X", 3, 0), send(2, "A", 9, 0), send(3, "B", 3, 5)], 4)
    report = validate_schedule({0: rodl}, ClusterSchedule([0, 6, 7], 30_000_000),
                               9600, FILES)
    assert not report.ok
    assert report_codes(report) == ["actor", "dangling", "dangling"]


def test_validate_flags_broadcast_sender():
    rodl = build_rodl(0, [send(1, "A", 3, 0)])
    report = validate_schedule({0: rodl}, ClusterSchedule([0, 6, 7], 30_000_000),
                               9600, FILES, node_aliases={"A": 0})
    assert [f.code for f in report.errors()] == ["broadcast-send"]


def test_validate_flags_overflow():
    rodl = build_rodl(0, [send(1, "A", 3, 0)], round_length_slots=200)
    report = validate_schedule({0: rodl}, ClusterSchedule([0], 1_000_000), 9600, FILES)
    assert [f.code for f in report.errors()] == ["overflow"]


def test_validate_warns_on_window_overlap():
    rodl = build_rodl(0, [send(1, "A", 3, 0)], round_length_slots=9)
    windows = {"US1": [(0, 1, 2)], "US2": [(0, 2, 2)]}
    report = validate_schedule({0: rodl}, ClusterSchedule([0], 30_000_000),
                               9600, FILES, task_windows=windows)
    assert report.ok  # warning only
    assert [f.code for f in report.findings] == ["window-overlap"]
    disjoint = {"US1": [(0, 1, 2)], "US2": [(0, 4, 2)]}
    report = validate_schedule({0: rodl}, ClusterSchedule([0], 30_000_000),
                               9600, FILES, task_windows=disjoint)
    assert not report.findings
