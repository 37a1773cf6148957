"""Exception hierarchy shared by every module."""


class OvaibError(Exception):
    """Base class for all library errors."""


class ShapeError(OvaibError, ValueError):
    """Operand dimensions do not agree."""


class NonFiniteError(OvaibError, ValueError):
    """An input or intermediate value is NaN or infinite."""


class DomainError(OvaibError, ValueError):
    """An argument lies outside the admissible domain of an operation."""


class ConfigError(OvaibError, ValueError):
    """A run configuration is malformed or inconsistent."""


class DivergenceError(OvaibError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step
