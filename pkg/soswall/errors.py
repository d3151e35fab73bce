class SOSError(Exception):
    """Base exception class for soswall errors."""
    pass


class ConfigError(SOSError, ValueError):
    """Exception raised when a parameter violates a module precondition."""
    pass


class StateSpaceTooLarge(ConfigError):
    """Exception raised when exact enumeration would exceed the size guard."""
    pass


class DegenerateShapeError(ConfigError):
    """Exception raised when a predicted limit ensemble would repeat a curve."""
    pass


class InvariantError(SOSError):
    """Exception raised when an internal invariant fails at runtime."""
    pass


class CriticalPointError(SOSError):
    """Exception raised for alpha_star equal to alpha_c, where no scaling limit exists."""
    pass


class EmptyGeometryError(SOSError, ValueError):
    """Exception raised when a geometric operation receives no points."""
    pass


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def exit_code(error: BaseException) -> int:
    """Map an exception to the cli exit status."""
    if isinstance(error, ConfigError):
        return EXIT_VALIDATION
    return EXIT_RUNTIME
