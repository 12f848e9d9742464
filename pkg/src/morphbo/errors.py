"""Exception types."""


class MorphBOError(Exception):
    """Base class for package errors."""


class DimensionMismatch(MorphBOError, ValueError):
    pass


class GridMismatch(MorphBOError, ValueError):
    pass


class ZeroWeightSum(MorphBOError, ValueError):
    pass


class SpecInvalid(MorphBOError, ValueError):
    pass


class InvalidShape(MorphBOError, ValueError):
    def __init__(self, report):
        super().__init__(f"invalid shape: {report.kind} at (k={report.k}, j={report.j})")
        self.report = report


class ParseError(MorphBOError, ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class DegenerateData(MorphBOError, ValueError):
    pass


class OutOfBounds(MorphBOError, ValueError):
    pass


class DegenerateDenominator(MorphBOError, ZeroDivisionError):
    pass


class EvaluatorFailure(MorphBOError, RuntimeError):
    pass
