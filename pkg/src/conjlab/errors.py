"""Exception hierarchy shared by the engines.

Every validation failure derives from :class:`ValidationError` so the CLI can
map it to a single exit code.
"""


class ConjlabError(Exception):
    """Base class for all package errors."""


class ValidationError(ConjlabError, ValueError):
    """Input rejected by a validator."""


class TooFewVertices(ValidationError):
    pass


class DuplicateVertex(ValidationError):
    pass


class NotConvex(ValidationError):
    pass


class NonPlanarFace(ValidationError):
    pass


class BadTopology(ValidationError):
    pass


class NonPositiveRadius(ValidationError):
    pass


class ProbeNotInterior(ValidationError):
    pass


class DegenerateAngle(ValidationError):
    pass


class BadBase(ValidationError):
    pass


class BadExponentBase(ValidationError):
    pass


class NotCoprime(ValidationError):
    pass


class ObjectiveNotFinite(ConjlabError):
    pass


class BudgetTooSmall(ConjlabError):
    pass


class StoreError(ConjlabError):
    pass


class IoFailure(StoreError, OSError):
    pass


class SchemaMismatch(StoreError):
    pass


class CorruptRecord(StoreError):
    pass


class UnknownColumn(StoreError, KeyError):
    pass


class SinkFailure(StoreError):
    pass
