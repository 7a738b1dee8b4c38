"""Exception hierarchy shared by every module.

Each numerical failure mode named in the public contracts has its own class so
callers (and the command line front end) can report the failure by name.
"""


class AnisoprodError(Exception):
    """Base class for all library errors."""


class NotExpansive(AnisoprodError):
    pass


class NonFinite(AnisoprodError):
    pass


class EmptyWindow(AnisoprodError):
    pass


class NonPositive(AnisoprodError):
    pass


class Unstable(AnisoprodError):
    pass


class ResolutionTooCoarse(AnisoprodError):
    pass


class ResidualExceedsTol(AnisoprodError):
    def __init__(self, message, worst_xi=None):
        super().__init__(message)
        self.worst_xi = worst_xi


class EmptyShell(AnisoprodError):
    pass


class GridMismatch(AnisoprodError):
    pass


class WindowOutsideCertifiedRange(AnisoprodError):
    pass


class NotMeanZero(AnisoprodError):
    pass


class TailTooHeavy(AnisoprodError):
    pass


class ProfileNotMeanZero(AnisoprodError):
    pass


class ProfileNotPeriodic(AnisoprodError):
    pass


class DerivativeUnstable(AnisoprodError):
    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class PVNotConvergent(AnisoprodError):
    def __init__(self, message, ladder=None):
        super().__init__(message)
        self.ladder = ladder


class NotAdmissible(AnisoprodError):
    pass


class DegenerateRectangle(AnisoprodError):
    pass


class WindowTooSmall(AnisoprodError):
    pass


class FormatError(AnisoprodError):
    pass
