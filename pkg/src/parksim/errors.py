"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numeric 4), so every
module raises one of the subclasses rather than bare ValueError.
"""


class ParksimError(Exception):
    """Base class for all package errors."""


class ConfigError(ParksimError):
    """Invalid run configuration or command-line arguments."""


class DataError(ParksimError):
    """Malformed or inconsistent input data (files, ids, tables)."""


class NumericError(ParksimError):
    """Non-finite values or failed numeric sanity checks."""
