"""Exception hierarchy shared across the package."""


class QcfError(Exception):
    """Base class for all library errors."""


class DuplicateLabelError(QcfError):
    pass


class UnknownLabelError(QcfError):
    pass


class NotAPermutationError(QcfError):
    pass


class DimensionMismatchError(QcfError):
    pass


class BadStateError(QcfError):
    pass


class MissingAssignmentError(QcfError):
    pass


class LabelMismatchError(QcfError):
    pass


class CoverageError(QcfError):
    pass


class ZeroProbabilityOutcomeError(QcfError):
    pass


class ZeroEvidenceProbabilityError(QcfError):
    pass


class NoDoStateDeclaredError(QcfError):
    pass


class UnknownVariableError(QcfError):
    pass


class NonTotalFunctionError(QcfError):
    pass


class InconsistentPlanError(QcfError):
    pass


class TooLargeError(QcfError):
    pass


class InvalidModelError(QcfError):
    pass


class NodeMismatchError(QcfError):
    pass


class ModelMismatchError(QcfError):
    pass


class ParseError(QcfError):
    """Parse failure with a source location.

    ``kind`` is "syntax" for tokenizer/grammar errors and "semantic" for
    well-formed documents that violate a model constraint.
    """

    def __init__(self, message, line, column, kind="syntax", expected=None):
        self.message = message
        self.line = line
        self.column = column
        self.kind = kind
        self.expected = expected
        loc = f"{line}:{column}"
        if expected:
            message = f"{message} (expected {expected})"
        super().__init__(f"{loc}: {kind} error: {message}")
