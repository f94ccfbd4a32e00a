"""Builtin task bodies bindable from cluster configs.

A task body may touch only its own node's file system; the schedule
alone decides what reaches the bus and when, so a misbehaving body can
delay or garble its node's data but never anyone's timing. All synthetic
readings are integer functions of the cycle index to keep traces
byte-identical across runs and platforms.
"""

from __future__ import annotations

from typing import Callable, Dict

from .errors import ConfigError

# Knuth's multiplicative hash constant; any odd 32-bit mixer would do.
_MIX = 2654435761


def _mix(seed: int, cycle: int) -> int:
    return ((seed * _MIX) ^ (cycle * 40503)) & 0xFFFFFFFF


def _cycle(node) -> int:
    return max(node.sim.cycle, 0)


def _noop(meta):
    def body(node, now):
        pass
    return body


def _counter(meta):
    file, record = int(meta["file"]), int(meta["record"])

    def body(node, now):
        n = int(meta.get("_n", 0)) + 1
        meta["_n"] = n
        node.ifs.push_record(file, record, n.to_bytes(4, "big"))
    return body


def _measure(meta):
    file, record = int(meta["file"]), int(meta["record"])
    seed = int(meta.get("seed", 1))
    span = int(meta.get("span", 200))
    base = int(meta.get("base", 20))

    def body(node, now):
        cycle = _cycle(node)
        value = base + _mix(seed, cycle) % span
        node.ifs.push_record(file, record,
                             bytes([value & 0xFF, (cycle >> 8) & 0xFF,
                                    cycle & 0xFF, seed & 0xFF]))
    return body


def _ping(meta):
    # like measure, but the sensor is active for `width` whole slots;
    # the demo checks these windows for overlap between sounders
    inner = _measure(meta)
    width = int(meta.get("width", 2))
    meta.setdefault("width", width)

    def body(node, now):
        inner(node, now)
    return body


def _sweep(meta):
    file, record = int(meta["file"]), int(meta["record"])
    period = int(meta.get("period", 16))
    amplitude = int(meta.get("amplitude", 90))
    if period < 1:
        raise ConfigError("<task>", 0, "sweep period must be >= 1")

    def body(node, now):
        cycle = _cycle(node)
        phase = cycle % (2 * period)
        pos = phase if phase < period else 2 * period - phase
        angle = (pos * amplitude) // period
        node.ifs.push_record(file, record,
                             bytes([angle & 0xFF, (cycle >> 8) & 0xFF,
                                    cycle & 0xFF, 0]))
    return body


def _combine(meta):
    inputs = []
    for part in str(meta["inputs"]).split(","):
        f, _, r = part.strip().partition(":")
        inputs.append((int(f), int(r)))
    file, record = int(meta["file"]), int(meta["record"])

    def body(node, now):
        total = 0
        for f, r in inputs:
            total += node.ifs.pull_record(f, r)[0]
        speed = 40 + total % 60
        steer = 45 + (total * 13) % 90
        cycle = _cycle(node)
        node.ifs.push_record(file, record, bytes([speed, steer, cycle & 0xFF, 0]))
    return body


def _actuate(meta):
    file, record = int(meta["file"]), int(meta["record"])
    index = int(meta.get("index", 0))

    def body(node, now):
        value = node.ifs.pull_record(file, record)[index]
        meta["_last"] = value
    return body


BUILTINS: Dict[str, Callable[[dict], Callable]] = {
    "noop": _noop,
    "counter": _counter,
    "measure": _measure,
    "ping": _ping,
    "sweep": _sweep,
    "combine": _combine,
    "actuate": _actuate,
}


def make_task_body(builtin: str, meta: dict) -> Callable:
    try:
        factory = BUILTINS[builtin]
    except KeyError:
        raise ConfigError("<task>", 0,
                          f"unknown builtin task '{builtin}' "
                          f"(have: {', '.join(sorted(BUILTINS))})") from None
    return factory(meta)
