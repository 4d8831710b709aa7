"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates its documented invariant."""


class ModelDomainError(ArithmeticError):
    """A model quantity was evaluated outside its mathematical domain."""


class NoCrossingError(ModelDomainError):
    """A threshold search found no crossing in the admissible range."""


class ConfigError(ValueError):
    """Malformed or unknown run configuration."""
