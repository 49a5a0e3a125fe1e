"""Exception hierarchy. Numerical failures map to CLI exit code 3."""


class HiggsLabError(Exception):
    """Base class for numerical failures."""


class InvalidDegreeError(HiggsLabError, ValueError):
    pass


class ShapeMismatchError(HiggsLabError, ValueError):
    pass


class ConditioningError(HiggsLabError):
    pass


class IntegrabilityError(HiggsLabError):
    pass


class NotInBXError(HiggsLabError):
    """Coefficients are not of the rank-one form required on surfaces of dimension 2."""


class DegenerateSpectrumError(HiggsLabError):
    pass


class RankOverflowError(HiggsLabError, ValueError):
    pass


class NormalizationError(HiggsLabError):
    pass


class NoSpectralDataError(HiggsLabError):
    pass


class DivergenceError(HiggsLabError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StageError(HiggsLabError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(Exception):
    """Invalid run configuration. ``path`` is the dotted field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
