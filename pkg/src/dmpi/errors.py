"""Exception hierarchy. Class names double as the error tags used in CLI messages."""


class DMPIError(Exception):
    """Base class for every error raised by this package."""

    module = "dmpi"

    def tagged(self):
        return f"[{self.module}] {type(self).__name__}: {self}"


class NonFiniteDraw(DMPIError, ValueError):
    module = "histograms"


class EmptySample(DMPIError, ValueError):
    module = "histograms"


class InvalidSmoothing(DMPIError, ValueError):
    module = "histograms"


class InvalidGrid(DMPIError, ValueError):
    module = "histograms"


class ShapeMismatch(DMPIError, ValueError):
    module = "divergence"


class BinOutOfRange(DMPIError, IndexError):
    module = "divergence"


class InfeasiblePrior(DMPIError, ValueError):
    module = "priors"


class TruncationTooTight(DMPIError, RuntimeError):
    module = "priors"


class DegenerateCalvo(DMPIError, ValueError):
    module = "nkpc_model"


class InvalidParameters(DMPIError, ValueError):
    module = "nkpc_model"


class DegenerateDesign(DMPIError, ValueError):
    module = "bvar"


class DegenerateWeights(DMPIError, ValueError):
    module = "sampler"


class AllParticlesDead(DMPIError, RuntimeError):
    module = "sampler"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class InsufficientDraws(DMPIError, ValueError):
    module = "evaluation"


class EmptyReplications(DMPIError, ValueError):
    module = "evaluation"


class ConfigError(DMPIError, ValueError):
    module = "cli"
