"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class USCError(Exception):
    exit_code = 1


class ConfigError(USCError):
    exit_code = 2


class ConfigSyntaxError(ConfigError):
    pass


class ConfigSchemaError(ConfigError):
    pass


class PhysicalParameterError(ConfigError, ValueError):
    """A parameter is well-formed but physically invalid (e.g. omega <= 0)."""


class NonConvergenceError(USCError):
    exit_code = 3

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class InstabilityError(USCError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, margin=float("nan")):
        super().__init__(message)
        self.margin = margin


class SizingError(USCError, ValueError):
    exit_code = 5
