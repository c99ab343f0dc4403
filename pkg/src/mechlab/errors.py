"""Exception hierarchy shared by every module of the package."""


class MechLabError(Exception):
    """Base class for all package errors."""


class DomainError(MechLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateIntervalError(DomainError):
    pass


class StructureError(MechLabError, ValueError):
    """Shapes or depths of two objects do not agree."""


class InconsistentBuyerError(MechLabError):
    """The buyer's choice is incompatible with every type in the candidate interval."""


class CapacityError(MechLabError):
    """An exhaustive search would exceed its configured budget."""


class PreconditionError(MechLabError):
    """An input mechanism fails a required property (e.g. IC/PIR)."""


class FinalRoundEqualizationError(MechLabError):
    """Types sharing a full history pay unequal prices in the last round."""


class ComplianceLostError(MechLabError):
    """An intermediate conversion step produced a non-compliant mechanism."""


class LPNumericalError(MechLabError):
    """The simplex iteration guard was exceeded."""


class GeneratorError(MechLabError):
    pass
