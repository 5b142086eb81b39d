"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`SwingIdError`.
The CLI maps the three families below onto its exit codes.
"""


class SwingIdError(Exception):
    """Base class for all package errors."""


class InputError(SwingIdError, ValueError):
    """Malformed input: bad topology, dimensions or configuration."""


class NumericalError(SwingIdError, ArithmeticError):
    """A numerical procedure cannot produce a meaningful answer."""


class InvalidTopology(InputError):
    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


class DimensionMismatch(InputError):
    pass


class NonpositiveDamping(InputError):
    pass


class InvalidParameters(InputError):
    pass


class ZeroTruth(InputError):
    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = tuple(nodes)


class NotPSD(InputError):
    pass


class ConfigParseError(InputError):
    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class ConfigValidationError(InputError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SingularInteriorBlock(NumericalError):
    pass


class DivergedTrajectory(NumericalError):
    pass


class RankDeficient(NumericalError):
    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


class DegenerateNode(NumericalError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ExtractionUnstable(NumericalError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
