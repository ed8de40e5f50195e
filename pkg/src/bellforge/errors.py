"""Exception hierarchy shared by all bellforge modules."""


class BellforgeError(Exception):
    pass


class LengthMismatchError(BellforgeError, ValueError):
    pass


class InvalidOutputError(BellforgeError, ValueError):
    """A player produced an output outside its output domain."""


class CapExceededError(BellforgeError):
    """An enumeration would exceed its configured size cap."""


class BoundViolationError(BellforgeError):
    """A computed value exceeds a proven upper bound (always an implementation bug)."""


class NotEnumerableError(BellforgeError):
    pass


class NonOrthonormalBasisError(BellforgeError, ValueError):
    pass


class ConfigError(BellforgeError, ValueError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
