"""Exception types shared across the package."""


class EditRollError(Exception):
    """Base class for all errors raised by this package."""


class BoundsError(EditRollError, IndexError):
    """An edit event lies outside the roll it is applied to."""


class ShapeError(EditRollError, ValueError):
    """Two grids that must share dimensions do not."""


class MidiParseError(EditRollError, ValueError):
    """Malformed MIDI input. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FormatError(EditRollError, ValueError):
    """A checkpoint or other on-disk artifact is not in the expected format."""


class NumericError(EditRollError, ArithmeticError):
    """A non-finite value appeared during network evaluation."""


class EmptySupportError(EditRollError, ValueError):
    """A target distribution has no support cells; the pair must be dropped."""


class NoLegalEventError(EditRollError, RuntimeError):
    """Every cell is masked; the sampler has no event to draw."""


class StackEmptyError(EditRollError, LookupError):
    """Undo or redo was requested on an empty stack."""


class UnreachableTargetError(EditRollError, ValueError):
    """Add-only evaluation asked to reach a target that requires removals."""


class UndefinedLikelihoodError(EditRollError, ValueError):
    """Likelihood requested for an input/target pair with zero edits."""


class ConfigError(EditRollError, ValueError):
    """A configuration value is invalid or inconsistent."""
