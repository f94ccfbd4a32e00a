"""Exception types shared across the package.

Everything raised on purpose derives from TtstnError so callers can catch
protocol/simulator failures without swallowing genuine bugs (plain
AssertionError, TypeError and friends stay fatal).
"""


class TtstnError(Exception):
    """Base class for all protocol and simulator errors."""


class RangeError(TtstnError, ValueError):
    """A numeric field is outside its permitted range."""


class MalformedAddressError(TtstnError, ValueError):
    """A packed address carries bits outside the 30-bit layout."""


class AddressError(TtstnError, LookupError):
    """Reference to a file or record that does not exist at this node."""


class SizeError(TtstnError, ValueError):
    """A record payload or frame has the wrong number of bytes."""


class NotExecutableError(TtstnError):
    """Execute on a record without a registered execute binding."""


class SlotConflictError(TtstnError):
    """Two senders claim overlapping slots in one round."""


class ScheduleError(TtstnError):
    """A round descriptor list violates a structural constraint."""


class CycleOverflowError(ScheduleError):
    """Rounds plus gaps do not fit into the configured cluster cycle."""


class FireworksDecodeError(TtstnError):
    """Received byte is not one of the eight round-trigger codewords."""


class FrameChecksumError(TtstnError):
    """Frame checksum mismatch; payload must be discarded."""


class FrameFormatError(TtstnError):
    """Frame fields do not decode to a known action or layout."""


class ValidationError(TtstnError):
    """A request or configuration failed validation before execution."""


class ConfigError(TtstnError):
    """Cluster configuration file is invalid.

    Carries file path and one-based line number for diagnostics.
    """

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        self.message = message
        super().__init__(f"{path}:{line}: {message}")


class StaleFaultError(TtstnError):
    """Fault injection addressed to a simulated instant already passed."""


class CapacityError(TtstnError):
    """No logical alias left in the assignable pool."""


class AssignmentError(TtstnError):
    """Alias assignment rejected (duplicate, reserved, or broadcast)."""


class UnknownSeriesError(TtstnError, LookupError):
    """No datasheet registered for the requested series number."""


class DatasheetError(TtstnError):
    """Datasheet file failed to parse or validate."""


class NotSubscribedError(TtstnError, LookupError):
    """Snapshot of a record the master never mirrors."""


class PartialConfigError(TtstnError):
    """Configuration download did not verify; node left unconfigured."""
