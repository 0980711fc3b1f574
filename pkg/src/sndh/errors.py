"""Exception types shared across the package."""


class SndhError(Exception):
    """Base class for package errors."""


class DegenerateInputError(SndhError, ValueError):
    """Input data carries no usable structure (e.g. all points identical)."""


class ModelBuildError(SndhError):
    """An optimization model could not be assembled from the instance data."""


class InternalModelError(SndhError, RuntimeError):
    """A model that must be feasible by construction came back infeasible."""
