"""Integer time arithmetic shared by schedule, clocks, and bus.

All simulated time is integer nanoseconds. Every duration is derived from
the UART bit time, which is rounded once; multiples of it stay exact so
repeated runs are bit-identical on any platform.
"""

from .errors import RangeError

NS_PER_SEC = 1_000_000_000


def div_round_half_up(num: int, den: int) -> int:
    """Divide non-negative integers, rounding halves up (no banker's)."""
    if num < 0 or den <= 0:
        raise RangeError(f"div_round_half_up expects num >= 0, den > 0, got {num}/{den}")
    return (2 * num + den) // (2 * den)


def bit_time_ns(baud: int) -> int:
    """Duration of one UART bit at the given rate, in nanoseconds."""
    if baud <= 0:
        raise RangeError(f"baud must be positive, got {baud}")
    return div_round_half_up(NS_PER_SEC, baud)
