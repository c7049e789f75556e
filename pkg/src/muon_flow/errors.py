"""Exception types raised across muon_flow."""


class MuonFlowError(Exception):
    """Base class for all library errors."""


class InvalidMatrix(MuonFlowError, ValueError):
    pass


class InvalidInput(MuonFlowError, ValueError):
    pass


class OutsideDomain(MuonFlowError, ValueError):
    """Argument lies outside the closed unit spectral-norm ball."""


class ShapeMismatch(MuonFlowError, ValueError):
    pass


class LengthMismatch(MuonFlowError, ValueError):
    pass


class InvalidScaling(MuonFlowError, ValueError):
    pass


class NonFiniteState(MuonFlowError, FloatingPointError):
    """A trajectory produced NaN/Inf.

    ``records`` holds the diagnostics collected before the failure and
    ``step`` the index of the last finite state.
    """

    def __init__(self, msg, records=None, step=None):
        super().__init__(msg)
        self.records = list(records) if records is not None else []
        self.step = step


class TooFewRecords(MuonFlowError, ValueError):
    pass


class NoRetainedSamples(MuonFlowError, ValueError):
    pass


class NonPositiveField(MuonFlowError, ValueError):
    pass


class InvalidConfig(MuonFlowError, ValueError):
    pass


class InvalidScale(MuonFlowError, ValueError):
    pass


class NonPositiveForLog(MuonFlowError, ValueError):
    pass
