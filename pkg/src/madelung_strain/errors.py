"""Exception hierarchy shared by the field modules and the CLI.

The CLI maps these onto exit codes, so every failure a user can trigger
derives from :class:`MadelungStrainError`.
"""


class MadelungStrainError(Exception):
    """Base class for all package errors."""


class ConstraintError(MadelungStrainError, ValueError):
    """A declared invariant of an input object was violated."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"[{invariant}] {message}")
        self.invariant = invariant


class GridError(ConstraintError):
    pass


class StencilDomainError(ConstraintError):
    """The grid (or valid region) is too small for the requested stencil."""

    def __init__(self, message: str):
        super().__init__("stencil-domain", message)


class DimensionError(ConstraintError):
    def __init__(self, message: str):
        super().__init__("dimension", message)


class EmptySupportError(ConstraintError):
    def __init__(self, message: str = "no grid point has amplitude above the floor"):
        super().__init__("empty-support", message)


class ConfigurationError(ConstraintError):
    def __init__(self, message: str):
        super().__init__("configuration", message)


class NormalizationError(ConstraintError):
    def __init__(self, message: str):
        super().__init__("normalization", message)


class FrameDegeneracyError(ConstraintError):
    def __init__(self, message: str, start: int, stop: int):
        super().__init__("frame-degeneracy", message)
        self.start = start
        self.stop = stop


class SamplingError(ConstraintError):
    def __init__(self, message: str):
        super().__init__("sampling", message)


class AlignmentError(ConstraintError):
    def __init__(self, message: str):
        super().__init__("alignment", message)


class InternalConsistencyError(MadelungStrainError):
    """Two algebraically identical discrete routes disagreed beyond tolerance.

    This signals a stencil or bookkeeping bug rather than bad input.
    """

    def __init__(self, check: str, value: float, tolerance: float):
        super().__init__(
            f"internal consistency check '{check}' failed: "
            f"{value:.3e} > tolerance {tolerance:.3e}"
        )
        self.check = check
        self.value = value
        self.tolerance = tolerance
