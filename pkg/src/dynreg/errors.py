class RegistrationError(Exception):
    """Base class for library errors."""


class InputError(RegistrationError, ValueError):
    """Rejected input: bad shapes, non-finite coordinates, out-of-range parameters."""


class ConfigError(RegistrationError, ValueError):
    """Invalid or inconsistent configuration."""


class ParseError(InputError):
    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class PyramidError(InputError):
    """A pyramid level came out empty."""

    def __init__(self, message, level):
        super().__init__(message)
        self.level = level


class DegenerateGeometryError(RegistrationError):
    """Too few pairs or collinear points for a rigid fit."""


class RegistrationFailure(RegistrationError):
    """Registration could not produce a transform; carries whatever diagnostics exist."""

    def __init__(self, message, trace=None, diagnostics=None):
        super().__init__(message)
        self.trace = trace
        self.diagnostics = diagnostics or {}


class ContractError(RegistrationError):
    """A caller broke a documented precondition."""


class UndefinedMetricError(RegistrationError, ValueError):
    pass


class GenerationError(RegistrationError):
    """A synthetic scene could not meet its spec."""


class RefineFailure(RegistrationError):
    """Clustering left nothing to build refined nodes from."""
