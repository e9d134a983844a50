"""Exception types shared across the package."""


class GxplainError(Exception):
    """Base class for all package-specific errors."""


class SelfLoopError(GxplainError):
    pass


class DuplicateEdgeError(GxplainError):
    pass


class FeatureDimMismatchError(GxplainError):
    pass


class InvalidMaskError(GxplainError):
    pass


class TooLargeError(GxplainError):
    """Lattice or corpus exceeds the configured exhaustive-search cap."""


class ParseError(GxplainError):
    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class UnboundVariableError(ParseError):
    pass


class DepthExceededError(GxplainError):
    pass


class BudgetExceededError(GxplainError):
    pass


class EmptyRegionError(GxplainError):
    """Perturbation target has no removable elements."""


class BadParamsError(GxplainError):
    pass


class SchemaError(GxplainError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ShapeMismatchError(GxplainError):
    pass


class DomainError(GxplainError):
    pass


class NotScalarError(GxplainError):
    pass


class EmptyGraphError(GxplainError):
    pass


class NonFiniteError(GxplainError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class AllWeightsDroppedError(GxplainError):
    pass
