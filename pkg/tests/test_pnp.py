"""Enumeration, alias assignment, and datasheet-driven configuration.

The search oracle below predicts every probe outcome of a descent from
the candidate name set alone, with no protocol code involved. Wire-level
enumeration must reproduce its answers bit for bit.
"""

import random

import pytest

from ttstn import errors, pnp, wire
from ttstn.config import build_cluster, load_spec
from ttstn.ifs import Section, ZERO_RECORD
from ttstn.nodes import NAME_BITS
from ttstn.robot import data_config_path


# -- oracle ------------------------------------------------------------------

def oracle_descent(names):
    """Predict (discovered name, per-bit responses) for one full descent.

    A probe at depth k asks: does any candidate matching the resolved
    k-1 bit prefix have bit k-1 == 0? The walk always prefers the 0
    branch, so it must land on the numerically smallest name.
    """
    value = 0
    responses = []
    for k in range(NAME_BITS):
        cands = [n for n in names if k == 0 or (n >> (NAME_BITS - k)) == value]
        responded = any(((n >> (NAME_BITS - 1 - k)) & 1) == 0 for n in cands)
        responses.append(responded)
        value = (value << 1) | (0 if responded else 1)
    return value, responses


def oracle_enumeration(names):
    """Discovery order over repeated descents: ascending name order."""
    remaining = set(names)
    found = []
    while remaining:
        value, _ = oracle_descent(remaining)
        assert value in remaining, "descent must land on a real candidate"
        found.append(value)
        remaining.discard(value)
    return found


def test_oracle_descent_lands_on_minimum():
    rng = random.Random(7)
    for _ in range(200):
        names = {rng.getrandbits(NAME_BITS) for _ in range(rng.randint(1, 12))}
        value, responses = oracle_descent(names)
        assert value == min(names)
        assert len(responses) == NAME_BITS


# -- cluster construction helpers -------------------------------------------------

def unbaptized_cfg(names):
    lines = [
        "[cluster]",
        "baud = 9600",
        "cycle = 25ms",
        "sequence = 0,ms",
        "",
        "[node M]",
        "role = master",
        "file = 3 records=4 section=rs",
        "",
        "[rodl 0]",
        "slots = 2",
        "entry = recv 1 actor=M addr=3:0",
    ]
    for i, name in enumerate(names):
        lines += [
            "",
            f"[node S{i}]",
            f"series = {name >> 32:#x}",
            f"serial = {name & 0xFFFFFFFF:#x}",
        ]
    return "\n".join(lines) + "\n"


def build_unbaptized(make_cluster, names):
    return make_cluster(unbaptized_cfg(names))


def random_names(seed, count):
    rng = random.Random(seed)
    names = set()
    while len(names) < count:
        names.add(rng.getrandbits(NAME_BITS))
    return names


# -- enumeration over the wire -----------------------------------------------------

@pytest.mark.parametrize("count,seed", [(1, 11), (3, 12), (10, 13)])
def test_baptize_matches_oracle(make_cluster, count, seed):
    names = random_names(seed, count)
    cluster = build_unbaptized(make_cluster, sorted(names))
    result = pnp.baptize(cluster.master, cluster.sim)
    found = [ident.name.value for ident in result.identifications]
    assert found == oracle_enumeration(names)
    assert all(ident.bit_probes == NAME_BITS for ident in result.identifications)
    assert result.presence_probes == count + 1
    assert [alias for _, alias in result.assignments] == list(range(1, count + 1))


def test_baptize_empty_cluster(make_cluster):
    cluster = build_unbaptized(make_cluster, [])
    result = pnp.baptize(cluster.master, cluster.sim)
    assert result.identifications == []
    assert result.presence_probes == 1


def test_probe_primitive(make_cluster):
    cluster = build_unbaptized(make_cluster, [0x0000004200000017])
    assert pnp.probe(cluster.master, cluster.sim, 0) is True
    # bit 0 of that name is 0: trial 0 at depth 1 responds
    assert pnp.probe(cluster.master, cluster.sim, 0) is True
    assert pnp.probe(cluster.master, cluster.sim, 1, trial_bit=0) is True


def test_named_nodes_leave_the_search(make_cluster):
    names = sorted(random_names(21, 2))
    cluster = build_unbaptized(make_cluster, names)
    pnp.baptize(cluster.master, cluster.sim)
    assert pnp.probe(cluster.master, cluster.sim, 0) is False


def test_mid_search_dropout_yields_aborted_ghost(make_cluster):
    name = 0x1234567800000000  # low half all zero, so silence flips bits to 1
    cluster = build_unbaptized(make_cluster, [name])
    node = cluster.node("S0")
    assert pnp.probe(cluster.master, cluster.sim, 0) is True
    value = 0
    for k in range(1, NAME_BITS + 1):
        if k == 33:
            node.set_online(False)  # dies mid-descent
        responded = pnp.probe(cluster.master, cluster.sim, k)
        value = (value << 1) | (0 if responded else 1)
    ghost = pnp.PhysicalName.from_value(value)
    assert ghost.value != name  # the answer is stale
    assert pnp.assign_alias(cluster.master, cluster.sim, ghost, 1) is False
    assert 1 not in cluster.master.alias_table  # rolled back


def test_assign_alias_guards(make_cluster):
    cluster = build_unbaptized(make_cluster, [0x0000004200000007])
    name = pnp.PhysicalName(0x42, 0x7)
    with pytest.raises(errors.ValidationError):
        pnp.assign_alias(cluster.master, cluster.sim, name, 0)
    with pytest.raises(errors.AssignmentError):
        pnp.assign_alias(cluster.master, cluster.sim, name, 251)
    assert pnp.assign_alias(cluster.master, cluster.sim, name, 9) is True
    assert cluster.node("S0").alias == 9
    with pytest.raises(errors.AssignmentError):
        pnp.assign_alias(cluster.master, cluster.sim, name, 9)  # taken


def test_lowest_free_alias_and_capacity(make_cluster):
    cluster = build_unbaptized(make_cluster, [])
    master = cluster.master
    assert pnp.lowest_free_alias(master) == 1
    master.register_alias(1, "x")
    master.register_alias(2, "y")
    assert pnp.lowest_free_alias(master) == 3
    for alias in range(3, 251):
        master.register_alias(alias, f"n{alias}")
    with pytest.raises(errors.CapacityError):
        pnp.lowest_free_alias(master)


# -- physical names ------------------------------------------------------------------

def test_physical_name_bits_and_text():
    name = pnp.PhysicalName(0x80000000, 0x00000001)
    assert name.bit(0) == 1
    assert name.bit(62) == 0
    assert name.bit(63) == 1
    assert str(name) == "80000000:00000001"
    assert pnp.PhysicalName.from_value(name.value) == name
    with pytest.raises(errors.ValidationError):
        pnp.PhysicalName(1 << 32, 0)


# -- datasheets ------------------------------------------------------------------------

REGISTRY = data_config_path("table1.cfg").parent.parent / "registry"


def test_fetch_shipped_datasheet():
    sheet = pnp.fetch_datasheet(REGISTRY, 0x2A)
    assert sheet.series == 0x2A
    assert [f.number for f in sheet.files] == [4]
    assert sheet.files[0].section is Section.RS
    assert len(sheet.entries) == 3
    sends = [e for e in sheet.entries if e.action.name == "SEND"]
    assert sends[0].slot == 2 and sends[0].length == 2


def test_unknown_series():
    with pytest.raises(errors.UnknownSeriesError):
        pnp.fetch_datasheet(REGISTRY, 0xDEAD)


def test_registry_filename_form():
    assert pnp.registry_filename(0x2A) == "0000002a.xml"
    assert pnp.registry_filename(0x00000201) == "00000201.xml"


def test_series_filename_mismatch(tmp_path):
    (tmp_path / "0000002a.xml").write_text(
        '<datasheet series="0x2b"><files/></datasheet>')
    with pytest.raises(errors.DatasheetError) as exc:
        pnp.fetch_datasheet(tmp_path, 0x2A)
    assert "0x0000002b" in str(exc.value)


def test_parse_errors_carry_position():
    with pytest.raises(errors.DatasheetError) as exc:
        pnp.parse_datasheet("<datasheet series='1'>\n  <oops\n</datasheet>", where="d.xml")
    assert "d.xml:" in str(exc.value)


@pytest.mark.parametrize("xml,needle", [
    ("<notasheet/>", "root element"),
    ('<datasheet series="zz"/>', "not a number"),
    ('<datasheet series="1"><files><file name="x" number="64" records="1" section="rs"/></files></datasheet>',
     "file 64"),
    ('<datasheet series="1"><files><file name="x" number="4" records="1" section="xx"/></files></datasheet>',
     "section"),
    ('<datasheet series="1"><clusterConfig><rodl round="6" slot="1" action="send" file="0" record="0"/></clusterConfig></datasheet>',
     "round 6"),
    ('<datasheet series="1"><clusterConfig><rodl round="0" slot="1" action="send" file="9" record="0"/></clusterConfig></datasheet>',
     "undeclared"),
    ('<datasheet series="1"><files><file name="x" number="4" records="2" section="rs"/></files>'
     '<clusterConfig><rodl round="0" slot="1" action="send" file="4" record="5"/></clusterConfig></datasheet>',
     "beyond file size"),
    ('<datasheet series="1"><files><file name="x" number="4" records="2" section="rs"/></files>'
     '<clusterConfig><rodl round="0" slot="0" action="send" file="4" record="0"/></clusterConfig></datasheet>',
     "slot"),
    ('<datasheet series="1"><clusterConfig><rodl round="0" slot="1" action="send" file="0" record="0" actor="peer"/></clusterConfig></datasheet>',
     "actor"),
    ('<datasheet series="1"><clusterConfig><rodl round="0" slot="1" action="jump" file="0" record="0"/></clusterConfig></datasheet>',
     "action"),
])
def test_datasheet_validation_errors(xml, needle):
    with pytest.raises((errors.DatasheetError, errors.ValidationError)) as exc:
        pnp.parse_datasheet(xml)
    assert needle in str(exc.value)


# -- staging image ------------------------------------------------------------------

def test_staging_records_layout():
    sheet = pnp.fetch_datasheet(REGISTRY, 0x2A)
    image = pnp.staging_records(sheet, {0: 9, 1: 4})
    assert len(image) == 61
    decoded = [wire.decode_rodl_record(r) for r in image[:5]]
    # two round-length markers first, then entries ordered by (round, slot)
    assert decoded[0] == (0, wire.RODL_KIND_ROUND_LEN, 9, 1, 0, 0)
    assert decoded[1] == (1, wire.RODL_KIND_ROUND_LEN, 4, 1, 0, 0)
    assert decoded[2] == (0, wire.RODL_KIND_SEND, 2, 2, 4, 0)
    assert decoded[3] == (0, wire.RODL_KIND_RECEIVE, 5, 1, 4, 1)
    assert decoded[4] == (1, wire.RODL_KIND_EXECUTE, 3, 1, 4, 2)
    assert all(r == ZERO_RECORD for r in image[5:])


def test_staging_records_need_scheduled_rounds():
    sheet = pnp.fetch_datasheet(REGISTRY, 0x2A)
    with pytest.raises(errors.ValidationError):
        pnp.staging_records(sheet, {0: 9})  # round 1 missing


# -- configuration download ----------------------------------------------------------

def baptize_demo_cluster():
    spec = load_spec(data_config_path("baptize-demo.cfg"))
    return spec, build_cluster(spec)


def test_download_activates_participation():
    spec, cluster = baptize_demo_cluster()
    result = pnp.baptize(cluster.master, cluster.sim)
    assert len(result.assignments) == 3
    for name, alias in result.assignments:
        sheet = pnp.fetch_datasheet(spec.registry, name.series)
        pnp.apply_configuration(cluster.master, cluster.sim, sheet, alias)
    assert cluster.master.unconfigured == set()
    mark = len(cluster.sim.trace)
    cluster.run_cycles(2)
    data_bytes = [r for r in cluster.sim.trace[mark:]
                  if r.round_id == 0 and r.kind == "delivered" and r.actor != "M"]
    assert sorted({r.actor for r in data_bytes}) == ["1", "2", "3"]
    assert cluster.sim.collisions == 0


def test_nodes_stay_silent_before_commit():
    spec, cluster = baptize_demo_cluster()
    result = pnp.baptize(cluster.master, cluster.sim)
    mark = len(cluster.sim.trace)
    cluster.run_cycles(3)
    mp_bytes = [r for r in cluster.sim.trace[mark:]
                if r.round_id == 0 and r.actor != "M"]
    assert mp_bytes == []  # named but unconfigured: no data-round traffic


def test_interrupted_download_reported_and_node_inert():
    spec, cluster = baptize_demo_cluster()
    result = pnp.baptize(cluster.master, cluster.sim)
    name, alias = result.assignments[0]
    sheet = pnp.fetch_datasheet(spec.registry, name.series)
    node = cluster.node("S1")  # lowest physical name, so first assigned
    node.set_online(False)
    with pytest.raises(errors.PartialConfigError):
        pnp.apply_configuration(cluster.master, cluster.sim, sheet, alias)
    assert alias in cluster.master.unconfigured
    node.set_online(True)
    mark = len(cluster.sim.trace)
    cluster.run_cycles(2)
    assert [r for r in cluster.sim.trace[mark:]
            if r.round_id == 0 and r.actor == str(alias)] == []


def test_commit_zero_clears_tables():
    spec, cluster = baptize_demo_cluster()
    result = pnp.baptize(cluster.master, cluster.sim)
    name, alias = result.assignments[0]
    sheet = pnp.fetch_datasheet(spec.registry, name.series)
    pnp.apply_configuration(cluster.master, cluster.sim, sheet, alias)
    node = cluster.node("S1")
    assert node.round_lengths
    comp = cluster.master.enqueue_ms(wire.MsAction.WRITE, alias, 0, 63,
                                     data=bytes([0, 0, 0, 0]))
    pnp.drive(cluster.sim, comp)
    assert node.round_lengths == {} and node.rodl_entries == {}
