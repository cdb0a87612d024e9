"""Exception types shared across the package."""


class OnwayError(Exception):
    """Base class for all package errors."""


class DegenerateTrip(OnwayError):
    """Remaining distance to the destination is zero, so detour is undefined."""

    def __init__(self, message="position coincides with destination", trip_id=None):
        if trip_id is not None:
            message = f"trip {trip_id}: {message}"
        super().__init__(message)
        self.trip_id = trip_id


class ZeroVariance(OnwayError):
    pass


class TooFewSites(OnwayError):
    pass


class EmptyChoiceSet(OnwayError):
    pass


class IndexOutOfRange(OnwayError, IndexError):
    pass


class WrongFamily(OnwayError):
    pass


class DegenerateGroups(OnwayError):
    pass


class EmptySubset(OnwayError):
    pass


class InvalidSpec(OnwayError):
    pass


class NoConvergence(OnwayError):
    def __init__(self, message, visited=None):
        super().__init__(message)
        self.visited = visited or []


class DataError(OnwayError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class DanglingReference(DataError):
    """A referenced id does not resolve (outlet, zone or distance row)."""

    def __init__(self, message, ref_id=None):
        super().__init__(message)
        self.ref_id = ref_id


class MatrixError(DataError):
    pass


class UnknownLocation(DataError):
    """A point has no named row in a matrix-backed distance provider."""


class SingularHessianWarning(UserWarning):
    pass


class DataWarning(UserWarning):
    pass
