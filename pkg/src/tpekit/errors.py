"""Exception hierarchy shared by every tpekit module.

Each class carries the CLI exit code it maps to.
"""


class TpeError(Exception):
    exit_code = 1


class ConfigError(TpeError, ValueError):
    """Invalid configuration value (n_max out of range, bad flag, ...)."""

    exit_code = 2


class FormatError(TpeError, ValueError):
    """Malformed input file: tokenizer JSON, corpus, embedding binary."""

    exit_code = 3


class IntegrityError(TpeError):
    """A structurally valid file whose contents violate a tokenizer invariant."""

    exit_code = 4


class CapacityError(TpeError):
    """Replacement budget exceeds the number of evictable tokens."""

    exit_code = 4

    def __init__(self, message: str, max_feasible: int):
        super().__init__(message)
        self.max_feasible = max_feasible


class TokenLookupError(TpeError, LookupError):
    exit_code = 3


class DegenerateDirectionError(TpeError, ArithmeticError):
    """Constituent embeddings average to the zero vector."""

    exit_code = 4


class ShapeError(TpeError, ValueError):
    exit_code = 3
