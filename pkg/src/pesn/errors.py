"""Exception types shared across the package.

Shape and domain violations raise plain ValueError at the call site;
these classes cover the conditions the CLI maps to distinct exit codes.
"""


class ConfigError(Exception):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericError(RuntimeError):
    """Numerical failure during an experiment (CLI exit code 3)."""


class DivergenceError(NumericError):
    """A simulated trajectory left the finite range."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"trajectory diverged at step {step}")
