"""Exception taxonomy shared across the package.

CLI exit codes map onto these classes: configuration problems exit 2,
numerical failures exit 3, compatibility problems exit 4 and unsupported
operations exit 5.
"""


class FactorlensError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FactorlensError):
    """Invalid configuration values or malformed config files."""


class DegenerateInputError(FactorlensError):
    """Input data that makes an operation ill-defined (e.g. zero variance)."""


class InsufficientDataError(FactorlensError):
    """A data stratum required by an estimator is empty."""


class DatasetFormatError(FactorlensError):
    """Base class for dataset load failures."""


class ManifestError(DatasetFormatError):
    """Missing, unparseable or schema-violating dataset manifest."""


class ArrayShapeError(DatasetFormatError):
    """Stored array bytes do not match the shape declared in the manifest."""


class ChecksumError(DatasetFormatError):
    """Stored array bytes do not match the manifest checksum."""


class ModelError(FactorlensError):
    """Parameter/input shape mismatches inside model components."""


class NumericalError(FactorlensError):
    """A non-finite value appeared in a loss term.

    ``term`` names the offending quantity.
    """

    def __init__(self, term: str, message: str = ""):
        self.term = term
        super().__init__(message or f"non-finite value in term '{term}'")


class TrainingDivergedError(NumericalError):
    """Training aborted on a non-finite loss; last good checkpoint retained."""


class IncompatibilityError(FactorlensError):
    """Checkpoint/architecture/dataset combinations that do not match."""


class UnsupportedFrameworkError(FactorlensError):
    """Operation not defined for the given framework (e.g. no conditional prior)."""


class ConcurrencyError(FactorlensError):
    """A run directory is locked by another writer."""
