"""Exception hierarchy shared by all modules."""


class ControlSimError(Exception):
    """Base class for errors raised by controlsim."""


class ConfigError(ControlSimError):
    """A scenario config file (or CLI argument) could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number in the config source, when known.
    source : str, optional
        Name of the config source (file path or canon id).
    """

    def __init__(self, message, line=None, source=None):
        self.message = message
        self.line = line
        self.source = source
        parts = [source] if source is not None else []
        if line is not None:
            parts.append(f"line {line}")
        super().__init__(f"{', '.join(parts)}: {message}" if parts else message)


class ScenarioError(ControlSimError):
    """A scenario failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(ControlSimError, ValueError):
    """An operation was called outside its domain (shape mismatch, bad support, rank loss)."""
