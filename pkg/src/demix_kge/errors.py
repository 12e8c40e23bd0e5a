class KgeError(Exception):
    """Base class for errors raised by this package."""


class ParseError(KgeError):
    """A data or config file line could not be parsed."""


class VocabError(KgeError):
    """An entity/relation name is unknown under a fixed vocabulary."""


class ConfigError(KgeError):
    """A configuration value violates a module invariant."""
