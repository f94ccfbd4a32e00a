"""Command-line interface: exit codes, output shapes, file artifacts."""

import re

import pytest

from ttstn.cli import EXIT_IO, EXIT_OK, EXIT_PROPERTY, EXIT_VALIDATION, entry
from ttstn.robot import data_config_path

TABLE1 = str(data_config_path("table1.cfg"))
ROBOT = str(data_config_path("robot.cfg"))
BAPTIZE = str(data_config_path("baptize-demo.cfg"))
REGISTRY = data_config_path("table1.cfg").parent.parent / "registry"


# -- validate ----------------------------------------------------------------

def test_validate_ok(capsys):
    assert entry(["validate", TABLE1]) == EXIT_OK
    assert ": ok" in capsys.readouterr().out


def test_validate_findings(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[cluster]\nbaud = 9600\ncycle = 20ms\nsequence = 0\n"
                   "[node A]\nrole = master\n[rodl 0]\nslots = 4\n"
                   "entry = send 1 actor=B addr=3:0\n")
    assert entry(["validate", str(bad)]) == EXIT_VALIDATION
    assert "error" in capsys.readouterr().out


def test_missing_config_is_config_error(tmp_path, capsys):
    assert entry(["validate", str(tmp_path / "nope.cfg")]) == EXIT_VALIDATION
    assert "cannot read config" in capsys.readouterr().err


def test_unwritable_trace_is_io_error(tmp_path, capsys):
    target = tmp_path / "no" / "such" / "dir" / "t.trace"
    assert entry(["run", TABLE1, "--cycles", "1",
                  "--trace", str(target)]) == EXIT_IO
    assert "i/o error" in capsys.readouterr().err


# -- run ----------------------------------------------------------------------

def test_run_trace_to_stdout(capsys):
    assert entry(["run", TABLE1, "--cycles", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("# ttstn-trace v1, baud=9600\n")
    assert len(out.strip().splitlines()) == 1 + 11


def test_run_trace_to_file_and_summary(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    assert entry(["run", TABLE1, "--cycles", "3", "--trace", str(trace),
                  "--summary"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "simulated time: 60000000 ns" in out
    assert "collisions: 0" in out
    assert trace.read_text().startswith("# ttstn-trace v1, baud=9600\n")


def test_run_duration(capsys):
    assert entry(["run", TABLE1, "--duration", "40ms", "--summary"]) == EXIT_OK
    assert "simulated time: 40000000 ns" in capsys.readouterr().out


def test_run_cycles_and_duration_conflict(capsys):
    with pytest.raises(SystemExit):
        entry(["run", TABLE1, "--cycles", "1", "--duration", "40ms"])


def test_run_twice_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    assert entry(["run", ROBOT, "--cycles", "20", "--trace", str(a)]) == EXIT_OK
    assert entry(["run", ROBOT, "--cycles", "20", "--trace", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_run_plot_renders_svg(tmp_path, capsys):
    svg = tmp_path / "bus.svg"
    assert entry(["run", TABLE1, "--cycles", "2", "--trace",
                  str(tmp_path / "t.trace"), "--plot", str(svg)]) == EXIT_OK
    head = svg.read_bytes()[:200]
    assert svg.stat().st_size > 0
    assert b"<svg" in head or b"<?xml" in head


# -- baptize --------------------------------------------------------------------

def test_baptize_output(capsys):
    assert entry(["baptize", BAPTIZE]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("baptized: name") == 3
    assert "00000201:00000011 -> alias 1 (64 bit-probes)" in out
    assert "presence probes: 4, assigned: 3" in out


def test_baptize_configure(capsys):
    assert entry(["baptize", BAPTIZE, "--configure"]) == EXIT_OK
    out = capsys.readouterr().out
    for alias, series in ((1, "00000201"), (2, "00000202"), (3, "00000203")):
        assert f"configured: alias {alias} from datasheet {series}.xml" in out


# -- maintenance-channel reads and writes ------------------------------------------

DM_LINE = re.compile(
    r"address=0x[0-9A-F]{8}, value=([0-9a-f]{8}|--), latency_cycles=\d+")


def test_dm_read_by_parts_and_packed(capsys):
    assert entry(["dm-read", ROBOT, "1:3:0"]) == EXIT_OK
    by_parts = capsys.readouterr().out
    assert entry(["dm-read", ROBOT, "0x00004300"]) == EXIT_OK
    packed = capsys.readouterr().out
    assert DM_LINE.match(by_parts)
    assert by_parts == packed
    assert "address=0x00004300" in by_parts


def test_dm_read_unknown_alias_times_out(capsys):
    assert entry(["dm-read", ROBOT, "99:3:0"]) == EXIT_PROPERTY
    captured = capsys.readouterr()
    assert "status: timeout" in captured.err
    assert "value=--" in captured.out


def test_dm_write(capsys):
    assert entry(["dm-write", ROBOT, "10:3:0", "deadbeef"]) == EXIT_OK
    assert DM_LINE.match(capsys.readouterr().out)


def test_dm_write_wants_four_bytes(capsys):
    assert entry(["dm-write", ROBOT, "10:3:0", "beef"]) == EXIT_VALIDATION
    assert "8 hex digits" in capsys.readouterr().err


def test_dm_read_without_ms_rounds_fails(capsys):
    assert entry(["dm-read", TABLE1, "1:3:0"]) == EXIT_PROPERTY
    assert "never completed" in capsys.readouterr().err


# -- configuration download ---------------------------------------------------------

DOWNLOAD_CFG = """
[cluster]
baud = 9600
cycle = 25ms
sequence = 0,ms
registry = {registry}

[node M]
role = master
file = 3 records=4 section=rs

[node S]
alias = 1
series = 0x0201
serial = 0x5
file = 3 records=1 section=rs
init = 3:0 aa000000

[rodl 0]
slots = 3
entry = recv 1 actor=M addr=3:0
"""


@pytest.fixture
def download_cfg(tmp_path):
    path = tmp_path / "dl.cfg"
    path.write_text(DOWNLOAD_CFG.format(registry=REGISTRY))
    return str(path)


def test_cp_download(download_cfg, capsys):
    assert entry(["cp-download", download_cfg, "--alias", "1"]) == EXIT_OK
    assert "alias 1: configuration from 00000201.xml committed" \
        in capsys.readouterr().out


def test_cp_download_explicit_series(download_cfg, capsys):
    assert entry(["cp-download", download_cfg, "--alias", "1",
                  "--series", "0x0201"]) == EXIT_OK
    assert "committed" in capsys.readouterr().out


def test_cp_download_unknown_alias(download_cfg, capsys):
    assert entry(["cp-download", download_cfg, "--alias", "5"]) == EXIT_VALIDATION
    assert "no node with alias 5" in capsys.readouterr().err


def test_cp_download_unknown_series(download_cfg, capsys):
    assert entry(["cp-download", download_cfg, "--alias", "1",
                  "--series", "0x0209"]) == EXIT_VALIDATION
    assert "no datasheet" in capsys.readouterr().err


def test_cp_download_without_registry(tmp_path, capsys):
    path = tmp_path / "noreg.cfg"
    path.write_text("\n".join(
        line for line in DOWNLOAD_CFG.format(registry=".").splitlines()
        if not line.startswith("registry")))
    assert entry(["cp-download", str(path), "--alias", "1"]) == EXIT_VALIDATION
    assert "no registry configured" in capsys.readouterr().err


# -- demo -----------------------------------------------------------------------------

def test_demo_ok(capsys):
    assert entry(["demo", "robot", "--cycles", "20"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "all coordination properties hold" in out
    assert "speed-loop delay: 29687655 ns (constant)" in out


def test_demo_overlap_fails(capsys):
    assert entry(["demo", "robot", "--cycles", "10", "--overlap"]) == EXIT_PROPERTY
    captured = capsys.readouterr()
    assert "FAIL: ultrasonic overlap" in captured.err


def test_demo_unknown_scenario(capsys):
    assert entry(["demo", "warehouse"]) == EXIT_VALIDATION
    assert "unknown demo" in capsys.readouterr().err
