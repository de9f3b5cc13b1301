"""Exception types shared across the package.

ConfigError maps to exit code 2 at the command line, DataError to 3.
"""


class ConfigError(Exception):
    """Invalid configuration: bad flag combination, unknown key, bad value."""


class DataError(Exception):
    """Input files that do not satisfy the documented format or invariants."""
