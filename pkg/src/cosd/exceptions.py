"""Exception hierarchy shared across the package."""


class CosdError(Exception):
    """Base class for all errors raised by this package."""


class BackendUnavailableError(CosdError):
    """A model backend could not produce a prediction.

    Raised on transport failures, malformed responses, and scripted mocks
    queried outside their table.
    """


class UnsupportedOperationError(CosdError):
    """The backend cannot perform the requested operation."""


class InvalidTokenError(CosdError):
    """A token id lies outside the vocabulary it is used against."""


class UnknownSymbolError(CosdError):
    """Text contains a symbol absent from the tokenizer vocabulary."""


class VocabularyMismatchError(CosdError):
    """Two objects that must share a vocabulary do not."""


class MalformedFileError(CosdError):
    """A tokenizer, model, or tree file could not be parsed."""


class ConfigError(CosdError):
    """A run configuration failed validation."""


class GenerationAborted(CosdError):
    """A backend or bridge error interrupted generation.

    Carries the partial trace accumulated up to the failure so callers can
    inspect what was committed before the abort.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
