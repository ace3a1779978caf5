"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: InputError -> 2, NumericError -> 3,
DependencyError -> 4.
"""


class NucleifuseError(Exception):
    """Base class for all pipeline errors."""


class InputError(NucleifuseError):
    """Malformed or out-of-contract input (bad file, bad shape, bad value)."""


class NumericError(NucleifuseError):
    """Numeric failure during computation (NaN loss, non-finite values)."""


class DependencyError(NucleifuseError):
    """A required upstream artifact (file, model, codebook) is missing."""
