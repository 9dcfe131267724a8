"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ``InputError`` -> 2 (bad user input),
``ArtifactMismatchError`` -> 3 (checkpoint/config disagreement), anything
else -> 1.
"""


class JepooError(Exception):
    """Base class for all toolkit errors."""


class InputError(JepooError):
    """Invalid user-supplied data or configuration."""


class ConfigError(InputError):
    """Inconsistent configuration values."""


class InputTooShortError(InputError):
    """Audio shorter than a single analysis window."""


class UndefinedSnrError(InputError):
    """SNR requested against a signal with zero power."""


class NoteRangeError(InputError):
    """Note pitch outside the supported 88-key range."""


class MalformedNoteError(InputError):
    """Note with non-positive duration or other impossible timing."""


class ArtifactMismatchError(JepooError):
    """Checkpoint, config, or data artifacts that do not fit together."""


class ShapeError(ValueError, JepooError):
    """Tensor shape mismatch in the differentiable kernels."""
