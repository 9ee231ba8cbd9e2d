"""Exception types shared across the package.

Missing input files raise the builtin FileNotFoundError / OSError family;
everything domain-specific lives here.
"""


class KgeError(Exception):
    """Base class for all package errors."""


class ParseError(KgeError):
    """A dataset file line could not be parsed."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ConfigError(KgeError):
    """Invalid configuration value or combination."""


class ContractError(KgeError):
    """A caller violated an API precondition (shape, range, emptiness)."""


class EvalError(KgeError):
    """A validation evaluator returned a non-finite score."""


class DivergenceError(KgeError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


class CompatError(KgeError):
    """Checkpoint and dataset/vocabulary do not fit together."""


class GenerationError(KgeError):
    """Query pattern instantiation failed after bounded retries."""
