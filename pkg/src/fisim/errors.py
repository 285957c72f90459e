"""Exception types raised across the package."""


class FisimError(ValueError):
    pass


class ConfigError(FisimError):
    """Invalid configuration (generator spec, synthesizer, experiment config)."""


class SizeError(FisimError):
    pass


class SchemaError(FisimError):
    pass


class IngestionError(FisimError):
    """CSV parsing failure; message carries row/column location."""


class DegenerateError(FisimError):
    """Single-class targets, one-class labels, zero vectors."""


class TractabilityError(FisimError):
    pass


class RecipeError(FisimError):
    pass


class ConsistencyError(FisimError):
    """Internal structure failed a well-formedness check."""
