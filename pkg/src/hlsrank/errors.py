"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code (see ``hlsrank.cli``).
"""


class HlsRankError(Exception):
    """Base class for all package errors."""

    category = "error"


class DimensionError(HlsRankError, ValueError):
    category = "dimension"


class ContractError(HlsRankError, ValueError):
    """A caller violated a documented precondition."""

    category = "contract"


class ValidityError(HlsRankError, ValueError):
    """A pragma configuration violates its space's constraints."""

    category = "validity"


class ConfigError(HlsRankError, ValueError):
    category = "config"


class SchemaError(HlsRankError, ValueError):
    """Serialized artifact has an unexpected layout or version."""

    category = "schema"


class NumericalError(HlsRankError, ArithmeticError):
    category = "numerical"


class InternalError(HlsRankError, RuntimeError):
    category = "internal"
