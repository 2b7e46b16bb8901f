"""Exception types shared across the package."""


class HypScherkError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(HypScherkError, ValueError):
    """An input lies outside the set where an operation is defined."""


class UnboundedLengthError(DomainError):
    """A curve reaches the ideal boundary, so its length is infinite."""


class EmptySegmentError(DomainError):
    """Horodisks cover a whole geodesic side."""


class CombinatorialLimitError(HypScherkError):
    """Polygon enumeration would exceed the configured caps."""


class MisconfigurationError(HypScherkError):
    """A check was requested for a domain it does not apply to."""


class SchemaError(HypScherkError, ValueError):
    """A domain file does not follow the expected layout."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class GridError(HypScherkError):
    """The requested grid is empty or cannot resolve the domain."""
