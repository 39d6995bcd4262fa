"""Exception types shared across the package."""


class CourseGraphError(Exception):
    """Base class for all library errors."""


class ParseError(CourseGraphError):
    """A data file could not be parsed (carries file and line context)."""


class SchemaError(CourseGraphError):
    """Parsed data violates the graph/feature/label schema."""


class ConfigError(CourseGraphError):
    """Invalid configuration value or combination."""


class ShapeError(CourseGraphError):
    """Matrix shape mismatch in a numeric operation."""


class NumericFault(CourseGraphError):
    """A numeric operation produced NaN or Inf."""


class TapeError(CourseGraphError):
    """Misuse of the gradient tape (e.g. replaying backward without reset)."""
