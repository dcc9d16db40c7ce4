"""Exception types shared across the package."""


class ThermocastError(Exception):
    """Base class for package-specific errors."""


class ConfigError(ThermocastError):
    """Invalid or unloadable server configuration."""


class DegenerateSensorsError(ThermocastError, ValueError):
    """Sensor set cannot be tetrahedralized (fewer than 4 sensors, or all
    coplanar). Callers fall back to nearest-sensor weighting for the whole
    grid."""


class IngestError(ThermocastError, ValueError):
    """Malformed readings input; message carries the offending line."""


class ProtocolError(ThermocastError):
    """Base class for wire-format and session errors."""


class BadMagicError(ProtocolError):
    pass


class UnknownVersionError(ProtocolError):
    pass


class UnknownFrameTypeError(ProtocolError):
    pass


class UnknownCommandError(ProtocolError):
    pass


class PayloadTooLargeError(ProtocolError):
    """Declared payload length exceeds the configured cap."""


class TrailingBytesError(ProtocolError):
    """Payload holds more bytes than its record layout accounts for."""


class ShortPayloadError(ProtocolError):
    """Payload is shorter than its fixed or per-record layout requires."""


class ProtocolViolationError(ProtocolError):
    """Frame received in a phase that does not permit it; the session is
    reset to a fresh full-mode cycle."""
