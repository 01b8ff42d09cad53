"""Exception hierarchy shared by all modules."""


class DapeError(Exception):
    """Base class for every error raised by dape_sim."""


class ValidationError(DapeError, ValueError):
    """Invalid user input (configs, sweep specs, parameter sets)."""


class DegenerateSpectrum(DapeError, ValueError):
    pass


class NonDifferentiablePath(DapeError):
    pass


class GaugeDiscontinuity(DapeError):
    pass


class OpenLoop(DapeError, ValueError):
    pass


# alias used by the analytic work expressions
NonClosedLoop = OpenLoop


class NotConstantGenerator(DapeError, ValueError):
    pass


class DetailedBalanceViolation(DapeError, ValueError):
    pass


class AdiabaticityViolation(DapeError, ValueError):
    pass


class StiffnessFailure(DapeError, RuntimeError):
    pass


class ToleranceUnachievable(DapeError, ValueError):
    pass


class MissingConnections(DapeError, ValueError):
    pass


class InsufficientData(DapeError, ValueError):
    pass


class NonPositiveValues(DapeError, ValueError):
    pass
