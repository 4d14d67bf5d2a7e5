"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed or out-of-domain input to a constructor or operation."""


class ParseError(InvalidInputError):
    """A LibSVM line could not be parsed."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ContractViolation(RuntimeError):
    """An aggregate-state update was called in the wrong initialization state."""


class UnsupportedStructureError(TypeError):
    """The oracle lacks the structure a code path requires (e.g. linear model)."""


class ConfigError(ValueError):
    """Invalid solver or experiment configuration."""


class DivergenceError(RuntimeError):
    """The iterate norm blew past the divergence guard."""

    def __init__(self, iteration, norm):
        self.iteration = iteration
        self.norm = norm
        super().__init__(f"iterate diverged at k={iteration} (|theta|={norm:.3e})")


class ReferenceFailure(RuntimeError):
    """The reference solver did not reach its tolerance within budget."""
