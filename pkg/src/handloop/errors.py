"""Exception types shared across the package."""


class FormatError(ValueError):
    """A model or dataset byte stream could not be decoded."""


class ConfigError(ValueError):
    """A run configuration is malformed (unknown key, unparsable value)."""
