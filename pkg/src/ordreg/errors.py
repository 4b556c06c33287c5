"""Exception hierarchy shared by all ordreg modules."""


class OrdregError(Exception):
    """Base class for every error raised by this package."""


class InvalidScaleError(OrdregError, ValueError):
    pass


class InvalidClassError(OrdregError, ValueError):
    pass


class CompatibilityError(OrdregError, ValueError):
    """An encoding was paired with a decoder that cannot interpret it."""


class DegenerateOutputError(OrdregError, ValueError):
    """A model output cannot be decoded (e.g. zero norm under cosine similarity)."""


class UndefinedKappaError(OrdregError, ArithmeticError):
    """Chance agreement equals one, so kappa has a zero denominator."""


class ShapeError(OrdregError, ValueError):
    pass


class TrainingDivergedError(OrdregError, ArithmeticError):
    """Loss or gradients became non-finite during training."""


class DataError(OrdregError, ValueError):
    pass


class DataParseError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SchemaError(DataError):
    pass


class ConfigError(OrdregError, ValueError):
    pass
