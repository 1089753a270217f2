"""Exception types shared across the toolkit."""


class LidkitError(Exception):
    """Base class for toolkit errors."""


class ConfigError(LidkitError):
    """Invalid configuration value or malformed config file."""


class MissingInputError(LidkitError):
    """A required input file or directory is absent."""


class ManifestError(LidkitError):
    """Malformed or inconsistent manifest content."""


class FormatError(LidkitError):
    """Corrupt or inconsistent binary container file."""


class NumericError(LidkitError):
    """Non-finite values encountered where finite numbers are required."""
