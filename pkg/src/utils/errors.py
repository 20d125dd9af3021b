"""Exception hierarchy shared by the parsers, the numerical modules and the CLI."""


class MechanicsError(ValueError):
    """Base class for every domain error raised by this package."""


class ExpressionSyntaxError(MechanicsError):
    def __init__(self, message, offset=0, text=None):
        self.message = message
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class ArityError(ExpressionSyntaxError):
    pass


class ExpressionDomainError(MechanicsError):
    """Raised when evaluation leaves the real domain of a function or operator."""

    def __init__(self, message, offset=0, node_text=""):
        self.offset = offset
        self.node_text = node_text
        location = f" in '{node_text}'" if node_text else ""
        super().__init__(f"{message}{location} at offset {offset}")


class UnboundVariableError(MechanicsError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"No binding for variable '{name}'")


class SystemFileError(MechanicsError):
    """Parse or validation error located in a system/state/signal file."""

    def __init__(self, message, source="<string>", line=0, column=0):
        self.source = source
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"{source}:{line}:{column}: {message}")


class SystemDefinitionError(MechanicsError):
    pass


class FieldNotFoundError(MechanicsError):
    def __init__(self, name, kind="field"):
        self.name = name
        super().__init__(f"Unknown {kind} '{name}'")


class MetricError(MechanicsError):
    """The metric failed the positive-definiteness test at an evaluation point."""

    def __init__(self, message, point=None, min_eigenvalue=None):
        self.point = point
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class JacobiFactorError(MetricError):
    pass


class RankDeficiencyError(MechanicsError):
    pass


class ConstraintViolationError(MechanicsError):
    pass


class TrajectoryTooShortError(MechanicsError):
    pass


class IntegrationError(MechanicsError):
    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class SignalError(MechanicsError):
    pass


class EnergyMismatchError(MechanicsError):
    pass


class BudgetExceededError(MechanicsError):
    pass


class ConfigError(MechanicsError):
    pass


class CheckFailedError(MechanicsError):
    """A named numerical check exceeded its threshold."""

    def __init__(self, check, value, threshold):
        self.check = check
        self.value = value
        self.threshold = threshold
        super().__init__(f"check '{check}' failed: {value:.6g} > {threshold:.6g}")
