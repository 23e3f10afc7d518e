"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Operand dimensions disagree with the operation's contract."""


class DomainError(ValueError):
    """A value lies outside the operation's domain (empty input, NaN, bad range)."""


class ContractError(ValueError):
    """An API precondition was violated (e.g. backward on a non-scalar node)."""


class ParseError(ValueError):
    """A dataset or report file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionError(ValueError):
    """A persisted file declares an unsupported format version."""


class ConfigError(ValueError):
    """A run or generator configuration is invalid."""


class SchemaError(ValueError):
    """Inconsistent schemas across report inputs."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, last_finite_epoch: int = -1, log=None):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch
        self.log = log
