class InvalidArgument(ValueError):
    pass


class SingularityError(ValueError):
    """Raised when a Green's function is evaluated too close to its source."""


class DegenerateMapError(ValueError):
    pass
