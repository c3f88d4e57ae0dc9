"""Exception hierarchy shared by all losml modules.

Every error carries a machine-readable ``code`` so the command-line front end
can map it to an exit status and an error JSON document.
"""


class LosmlError(Exception):
    """Base class for all library errors."""

    #: exit-status family used by the CLI: "config", "data" or "numeric"
    family = "data"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    @property
    def code(self):
        return type(self).__name__

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        out.update({k: v for k, v in self.details.items() if v is not None})
        return out


# --- data / input errors -------------------------------------------------


class UnknownColumn(LosmlError):
    pass


class TypeParseError(LosmlError):
    pass


class UnknownCategory(LosmlError):
    pass


class EmptyInput(LosmlError):
    pass


class DegenerateOutcome(LosmlError):
    pass


class MissingCellsPresent(LosmlError):
    pass


class SingleClass(LosmlError):
    pass


class LengthMismatch(LosmlError):
    pass


class DimensionMismatch(LosmlError):
    pass


class EmptyDomain(LosmlError):
    pass


class AllMissingColumn(LosmlError):
    pass


class NoPredictorsAvailable(LosmlError):
    pass


class EmptyBackground(LosmlError):
    pass


class EmptyMatrix(LosmlError):
    pass


class InvalidSpec(LosmlError):
    family = "config"


class ConfigError(LosmlError):
    family = "config"


class SchemaError(LosmlError):
    pass


# --- numeric errors ------------------------------------------------------


class NumericError(LosmlError):
    family = "numeric"


class ConstantInput(NumericError):
    pass


class DegenerateTable(NumericError):
    pass


class DegenerateGroups(NumericError):
    pass


class ZeroExpectedCount(NumericError):
    pass


class TooFewRows(NumericError):
    pass


class TooManyFeatures(NumericError):
    pass


class NonFiniteGradient(NumericError):
    pass


class ZeroPredictors(NumericError):
    pass


class DegenerateResample(NumericError):
    pass
