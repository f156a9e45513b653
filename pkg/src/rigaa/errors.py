"""Exception hierarchy shared by all rigaa modules."""


class RigaaError(Exception):
    """Base class for every error raised by this package."""


class SchemaMismatch(RigaaError, ValueError):
    pass


class GenerationExhausted(RigaaError, RuntimeError):
    pass


class InvalidScenario(RigaaError, ValueError):
    pass


class DegenerateGeometry(RigaaError, ArithmeticError):
    pass


class EpisodeFinished(RigaaError, RuntimeError):
    pass


class ParentTooShort(RigaaError, ValueError):
    pass


class BudgetTooSmall(RigaaError, ValueError):
    pass


class SuiteTooSmall(RigaaError, ValueError):
    pass


class SampleTooSmall(RigaaError, ValueError):
    pass


class NonFiniteLoss(RigaaError, FloatingPointError):
    pass


class CorruptPolicyFile(RigaaError, ValueError):
    pass
