"""Exceptions raised by polarthru."""


class PolarthruError(Exception):
    """Base class of all polarthru errors."""


class ProtocolViolation(PolarthruError):
    """An HARQ object was driven through a transition its state forbids."""


class RetransmissionLimitExceeded(PolarthruError):
    """A codeword needed more transmissions than the configured cap."""


class QueueOverflow(PolarthruError):
    """Too many receptions are waiting for upper-level resolution on one level."""


class CodeFileError(PolarthruError):
    """A code file is malformed or disagrees with the requested run."""
