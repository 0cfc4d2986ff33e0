"""Exception hierarchy shared across the package."""


class SparseFPCAError(Exception):
    """Base class for all package errors."""


class ModelError(SparseFPCAError, ValueError):
    """Invalid ground-truth model (ties among eigenvalues, non-orthonormal basis, bad density)."""


class GridMismatchError(SparseFPCAError, ValueError):
    """Two tabulated objects live on different grids."""


class DataTooSparseError(SparseFPCAError, RuntimeError):
    """A local fit stays singular after every bandwidth escalation."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class UnsupportedMomentError(SparseFPCAError, NotImplementedError):
    """Fourth moments are not available for the model's score law."""


class SpectralError(SparseFPCAError, RuntimeError):
    """Eigendecomposition failed or returned an inaccurate result."""


class ConfigError(SparseFPCAError, ValueError):
    """Experiment configuration failed validation."""


class PanelParseError(SparseFPCAError, ValueError):
    """A panel CSV file could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ExperimentAborted(SparseFPCAError, RuntimeError):
    """Too many replicates failed within an experiment."""
