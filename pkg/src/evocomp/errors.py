"""Shared exception types mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration, input file, or argument (exit code 2)."""


class OracleError(RuntimeError):
    """Accuracy oracle or worker pool failure (exit code 3)."""


class ProtocolError(RuntimeError):
    """Malformed wire-protocol message."""


class DomainError(ValueError):
    """Genotype entry outside its gene domain (closure violation)."""
