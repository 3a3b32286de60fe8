# strategem/core/errors.py
#
# Every failure raised by the library derives from StrategemError so the CLI can
# map it onto an exit code. Validation problems are returned as data instead
# (see scm_engine.validate).


class StrategemError(Exception):
    """Base class for model and experiment failures."""


class ScenarioError(StrategemError, ValueError):
    """Scenario or model document does not match the schema."""


class CyclicGraph(StrategemError, ValueError):
    pass


class UnknownNode(StrategemError, KeyError):
    def __init__(self, node: str, where: str = "model"):
        self.node = node
        super().__init__(f"Unknown node '{node}' in {where}.")

    def __str__(self) -> str:
        return self.args[0]


class EvaluationDomain(StrategemError, ValueError):
    """A tabulated structural function was probed outside its grid."""


class NonAdditiveAbduction(StrategemError):
    """An embedded-noise term was demanded but cannot be uniquely recovered."""


class InconsistentEvent(StrategemError, ValueError):
    """Observed values contradict a point-mass noise law."""


class UnsupportedConditioning(StrategemError):
    """The event would distort the law of a free noise term."""


class DimensionMismatch(StrategemError, ValueError):
    pass


class SolverMismatch(StrategemError, ValueError):
    pass


class BudgetExhausted(StrategemError):
    """Search oracle ran out of certification budget before exhausting its family."""


class AmbiguousSign(StrategemError):
    pass


class AssumptionViolated(StrategemError):
    pass


class PreconditionFailed(StrategemError, ValueError):
    pass
