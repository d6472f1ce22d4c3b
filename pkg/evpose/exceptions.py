"""Exceptions raised across evpose.

The CLI maps these onto its exit codes, so library code raises them
instead of calling sys.exit itself.
"""


class EvposeError(Exception):
    """Base for everything evpose raises on purpose."""


class InvalidArgument(EvposeError, ValueError):
    """A caller passed a value outside an operation's domain."""


class InvalidConfig(InvalidArgument):
    """A model/train/run configuration can't be satisfied."""


class InvalidInput(EvposeError, ValueError):
    """Data handed to an operation breaks its invariants (bounds, ordering)."""


class InvalidState(EvposeError, RuntimeError):
    """An object isn't in the state the operation needs."""


class UndefinedResult(EvposeError, ArithmeticError):
    """A metric has nothing to average over."""


class FormatError(EvposeError):
    """A file doesn't match its declared format.

    Attributes:
      path: file being read, if known
      offset: byte offset of the problem for binary formats
      line: 1-based line number of the problem for text formats
    """

    def __init__(self, message, path=None, offset=None, line=None):
        self.path = path
        self.offset = offset
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ShapeMismatch(FormatError):
    """A stored tensor doesn't fit the configured model."""

    def __init__(self, name, expected, found, path=None):
        self.name = name
        self.expected = tuple(expected)
        self.found = tuple(found)
        super().__init__(
            f"tensor {name}: expected shape {self.expected}, found {self.found}",
            path=path,
        )


class NonFiniteLoss(EvposeError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
