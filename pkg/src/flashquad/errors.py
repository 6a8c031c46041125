"""Exception hierarchy for the flashquad storage engine."""


class FlashQuadError(Exception):
    """Base class for all errors raised by this package."""


class RangeError(FlashQuadError):
    """Page address or byte offset outside the device."""


class BitViolationError(FlashQuadError):
    """A program requested a 0 -> 1 bit transition without an erase."""

    def __init__(self, addr: int, offset: int) -> None:
        super().__init__(f"program to page {addr} would set a cleared bit at byte {offset}")
        self.addr = addr
        self.offset = offset


class WearOutError(FlashQuadError):
    """A subsector reached its erase-cycle limit."""

    def __init__(self, subsector: int, limit: int) -> None:
        super().__init__(f"subsector {subsector} reached erase limit {limit}")
        self.subsector = subsector
        self.limit = limit


class PowerLossError(FlashQuadError):
    """Injected power loss interrupted a program or erase."""


class FormatError(FlashQuadError):
    """On-flash bytes do not decode as the expected page format."""


class DomainError(FlashQuadError):
    """Geometric argument outside its domain (point outside cell, depth overflow...)."""


class ConflictError(FlashQuadError):
    """Object id already present."""


class NotFoundError(FlashQuadError):
    """Requested object or version does not exist."""


class FlashFullError(FlashQuadError):
    """No allocatable page remains, even after garbage collection."""


class VersionConflictError(FlashQuadError):
    """Update package base version does not match the target's current version."""


class RelocationError(FlashQuadError):
    """Update package wants a page address that is not free on the target."""


class IntegrityError(FlashQuadError):
    """Checksum mismatch in an update package or device image."""


class ParseError(FlashQuadError):
    """Malformed dataset or trace text."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class SessionError(FlashQuadError):
    """Mutation attempted outside the single active write session."""
