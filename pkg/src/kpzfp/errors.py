class KpzError(Exception):
    pass


class DomainError(KpzError, ValueError):
    pass


class InvalidConfigError(KpzError, ValueError):
    pass


class InsufficientDataError(KpzError, ValueError):
    pass


class DataError(KpzError, ValueError):
    pass


class PrecisionError(KpzError, RuntimeError):
    """Raised when a numerical certificate cannot be met.

    `achieved` carries the best error bound reached and `value` the best
    estimate, when one exists.
    """

    def __init__(self, msg, achieved=None, value=None):
        super().__init__(msg)
        self.achieved = achieved
        self.value = value
