"""Exception hierarchy. Each class carries an exit code used by the CLI."""


class GmwError(Exception):
    exit_code = 1
    category = "error"


class UsageError(GmwError, ValueError):
    exit_code = 2
    category = "usage"


class ConfigError(UsageError):
    category = "config"


class ShapeError(GmwError, ValueError):
    exit_code = 3
    category = "shape"


class DimensionError(ShapeError):
    category = "dimension"


class NumericError(GmwError, ArithmeticError):
    exit_code = 4
    category = "numeric"


class IngestionError(GmwError, OSError):
    exit_code = 5
    category = "ingestion"


class CorruptionError(IngestionError):
    category = "corruption"
