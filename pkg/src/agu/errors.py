"""Exception types raised by the agu package."""


class AguError(Exception):
    """Base class for all agu errors."""


class InvalidInputError(AguError, ValueError):
    """An image or argument violates an operation's preconditions."""


class InvalidModelError(AguError, ValueError):
    """A model is structurally inconsistent with the requested operation."""


class InvalidConfigError(AguError, ValueError):
    """A configuration value is out of its admissible range."""
