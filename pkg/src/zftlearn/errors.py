"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
OSError -> 4.  Library code raises them directly; nothing here is caught
internally unless a contract says so.
"""


class ZftError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ZftError):
    """Invalid or inconsistent configuration (bad ranges, unknown keys,
    mismatched list lengths, incompatible checkpoint/scenario)."""


class ShapeError(ZftError):
    """Array or window shape does not match the model/operation contract."""


class NumericalError(ZftError):
    """Non-finite values encountered where finiteness is a postcondition."""


class OutOfDomain(ZftError):
    """Input outside the mathematical domain of an operation."""


class DegenerateQuaternion(ZftError):
    """Quaternion norm too small to represent a rotation."""


class DegenerateStiffness(ZftError):
    """Stiffness matrix with zero trace passed to damping design."""
