"""Exception hierarchy shared by all wgtrap modules."""


class WgtrapError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(WgtrapError, ValueError):
    pass


class DegenerateCaseError(WgtrapError):
    """|s33| is (numerically) one; the branch decouples."""


class InconsistentInputError(WgtrapError):
    """Input matrix violates an identity it should satisfy (e.g. unitarity)."""


class InvalidGeometryError(WgtrapError, ValueError):
    def __init__(self, message, primitive=None):
        super().__init__(message)
        self.primitive = primitive


class MeshingError(WgtrapError):
    pass


class AssemblyError(WgtrapError):
    pass


class SolverError(WgtrapError):
    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class CutoffError(WgtrapError):
    """Wavenumber too close to a modal threshold."""


class ConfigurationError(WgtrapError):
    pass


class SectionPlacementError(WgtrapError):
    def __init__(self, message, suggested_spacing=None):
        super().__init__(message)
        self.suggested_spacing = suggested_spacing


class BracketError(WgtrapError):
    pass


class HypothesisNotObservedError(WgtrapError):
    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class ConfigError(WgtrapError):
    """Run configuration is invalid; ``key`` names the offending dotted key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
