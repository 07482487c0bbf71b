"""Exception types raised across the package."""


class NashAdaptError(Exception):
    """Base class; carries the name of the module that raised it."""

    module = "nashadapt"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class DisconnectedGraph(NashAdaptError):
    module = "generator"


class NonConvergence(NashAdaptError):
    module = "game"


class NotStronglyMonotone(NashAdaptError):
    module = "game"


class NotHurwitz(NashAdaptError):
    module = "controller"


class UnsupportedExosystem(NashAdaptError):
    module = "plant"


class NonFiniteState(NashAdaptError):
    module = "sim"

    def __init__(self, t, detail=""):
        self.t = t
        super().__init__(f"non-finite state at t={t:.6g}" + (f": {detail}" if detail else ""))


class InsufficientHorizon(NashAdaptError):
    module = "analysis"


class UnknownFigure(NashAdaptError):
    module = "cli"


class ValidationError(NashAdaptError):
    """Scenario config failed validation; ``problems`` lists every violation."""

    module = "config"

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
