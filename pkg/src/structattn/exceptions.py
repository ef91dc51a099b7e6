class StructAttnError(Exception):
    """Base class for errors raised by this package."""


class DegenerateDistributionError(StructAttnError):
    """Every structure has zero weight, so the distribution is undefined."""


class InstanceTooLargeError(StructAttnError):
    """A brute-force oracle was asked to enumerate too many structures."""


class InfeasibleTargetError(StructAttnError, ValueError):
    """Training targets violate the marginal sum constraints."""


class FormulaSyntaxError(StructAttnError, ValueError):
    def __init__(self, message, position):
        super().__init__("%s (at token %d)" % (message, position))
        self.position = position
