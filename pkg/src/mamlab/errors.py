"""Exception hierarchy shared across the package.

Each class maps to one failure family: shape rules, API contracts, bad
parameter values, bad run configuration, bad file contents, bad input data,
and non-finite numerics. The CLI translates these into exit codes.
"""


class MamlabError(Exception):
    """Base class for all package errors."""


class DimensionError(MamlabError):
    """A shape rule was violated (mismatched extents, bad reshape, ...)."""


class ContractError(MamlabError):
    """An API precondition was violated (non-scalar loss, missing grad, ...)."""


class ParameterError(MamlabError):
    """A numeric parameter is outside its valid range."""


class ConfigError(MamlabError):
    """A run configuration is inconsistent or incomplete."""


class FormatError(MamlabError):
    """A file does not match its documented layout."""


class InputError(MamlabError):
    """Input data is unusable (too short, out-of-range label, empty set)."""


class NumericError(MamlabError):
    """A computation produced non-finite values."""
