"""Exception types shared across the package."""


class SeqExplainError(Exception):
    """Base class for every error raised by this package."""


class DataError(SeqExplainError):
    """Input data is missing, empty, or fails basic validity checks."""


class SchemaError(DataError):
    """Input does not match the declared event schema."""


class ParseError(DataError):
    """A cell value could not be parsed as a finite number."""


class DimensionError(SeqExplainError):
    """Matrix or vector dimensions do not line up."""


class SolverError(SeqExplainError):
    """The attribution regression cannot be solved as posed."""


class TransportError(SeqExplainError):
    """Failure while talking to an external model."""


class HandshakeError(TransportError):
    """The external model did not complete the protocol handshake."""


class VersionMismatchError(HandshakeError):
    """The external model speaks an unsupported protocol version."""


class MalformedResponseError(TransportError):
    """The external model sent a line the client cannot accept."""
