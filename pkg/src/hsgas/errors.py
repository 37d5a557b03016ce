"""Exception types raised across the package."""


class HsgasError(Exception):
    """Base class for all package errors."""


# core-model
class ScalingViolation(HsgasError, ValueError):
    pass


class InvalidDimension(HsgasError, ValueError):
    pass


class MalformedSpec(HsgasError, ValueError):
    pass


# hard-sphere dynamics
class OverlapInput(HsgasError, ValueError):
    pass


class NonUnitOmega(HsgasError, ValueError):
    pass


class EventCascadeOverflow(HsgasError, RuntimeError):
    pass


class InconsistentState(HsgasError, RuntimeError):
    pass


class SizeGuard(HsgasError, ValueError):
    pass


# ensembles
class RejectionBudgetExhausted(HsgasError, RuntimeError):
    pass


class InvalidDensity(HsgasError, ValueError):
    pass


# observables
class MissingSampleTime(HsgasError, KeyError):
    pass


class InsufficientReplicas(HsgasError, ValueError):
    pass


class AmplitudeGuard(HsgasError, ValueError):
    pass


class KTooLarge(HsgasError, ValueError):
    pass


# kinetic solvers
class CutoffLeak(HsgasError, RuntimeError):
    pass


class MajorantBreach(HsgasError, RuntimeError):
    """Signals a relative speed above the running majorant; callers retry."""


class CellUnderflow(HsgasError, RuntimeError):
    pass


class NegativeMass(HsgasError, ValueError):
    pass


class IntegratorFailure(HsgasError, RuntimeError):
    pass


# large deviations
class SupportViolation(HsgasError, ValueError):
    pass


class ExpOverflow(HsgasError, ValueError):
    pass


# harness
class ConfigInvalid(HsgasError, ValueError):
    pass


class ResourceBudgetExceeded(HsgasError, RuntimeError):
    pass


class ConfigHashMismatch(HsgasError, ValueError):
    pass
