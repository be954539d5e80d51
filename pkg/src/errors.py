from typing import Any, Optional


class ConvSoapError(Exception):
    """Base class for every error raised by the pipeline and the evaluation suite."""


class PreconditionError(ConvSoapError, ValueError):
    pass


class EmptyTranscriptError(ConvSoapError, ValueError):
    pass


class ParseError(ConvSoapError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(ConvSoapError, ValueError):
    pass


class ZeroVectorError(ConvSoapError, ValueError):
    pass


class VersionError(ConvSoapError, ValueError):
    pass


class ConfigError(ConvSoapError, ValueError):
    pass


class ProviderError(ConvSoapError, RuntimeError):
    pass


class GenerationError(ConvSoapError, RuntimeError):
    pass


class EmptyResponseError(GenerationError):
    pass


class PartialSoapError(ConvSoapError, ValueError):
    """Raised when generated text lacks some SOAP headers, carries what was parsed."""

    def __init__(self, missing: list[str], partial: Any):
        self.missing = missing
        self.partial = partial
        super().__init__(f"Missing SOAP sections: {', '.join(missing)}")


class DegenerateAgreementError(ConvSoapError, ValueError):
    pass


class UnknownItemError(ConvSoapError, KeyError):
    pass
