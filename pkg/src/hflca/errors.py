"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: model/file validation problems exit
with 1, numerical failures with 2, and I/O problems with 3.
"""

from __future__ import annotations


class HflcaError(Exception):
    """Base class for all errors raised by this package."""


class ModelValidationError(HflcaError):
    """A system model, scenario, or problem violates a structural rule."""


class FileFormatError(ModelValidationError):
    """A file failed to parse or violated its schema.

    Carries the source path and a location hint (line/column for syntax
    errors, a JSON path for schema violations) so diagnostics always point
    at the offending spot.
    """

    def __init__(self, message: str, *, path: str | None = None, location: str | None = None):
        self.path = path
        self.location = location
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if location:
            prefix += f"at {location}: "
        super().__init__(prefix + message)


class NumericalError(HflcaError):
    """A computation failed for numerical reasons (singularity, negativity)."""


class SingularTechnologyMatrixError(NumericalError):
    """The technology matrix cannot be factorized reliably."""

    def __init__(self, message: str, *, pivot_index: int | None = None,
                 condition_estimate: float | None = None):
        self.pivot_index = pivot_index
        self.condition_estimate = condition_estimate
        super().__init__(message)


class NegativeTransitionMarkingError(NumericalError):
    """A firing completion exceeded the in-flight quantity of a transition."""

    def __init__(self, message: str, *, k: int, transition: str, value: float):
        self.k = k
        self.transition = transition
        self.value = value
        super().__init__(message)


class NegativeBufferMarkingError(NumericalError):
    """A place marking went negative while nonnegativity was enforced."""

    def __init__(self, message: str, *, k: int, place: str, value: float):
        self.k = k
        self.place = place
        self.value = value
        super().__init__(message)
