"""Exception types shared across the package."""


class DrcattError(Exception):
    """Base class for all package errors."""


# --- panel construction -------------------------------------------------

class UnbalancedPanelError(DrcattError):
    """A unit is missing one or more periods."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"unbalanced panel; missing unit-periods: {self.missing[:10]}")


class DuplicateObservationError(DrcattError):
    pass


class NonBinaryTreatmentError(DrcattError):
    pass


class NoControlUnitsError(DrcattError):
    pass


class NoAdmissibleCellsError(DrcattError):
    pass


# --- first stage --------------------------------------------------------

class SingularDesignError(DrcattError):
    pass


class PerfectSeparationError(DrcattError):
    pass


class NoConvergenceError(DrcattError):
    pass


class RankDeficientError(DrcattError):
    pass


class EmptyControlSampleError(DrcattError):
    pass


class OverlapViolationError(DrcattError):
    pass


# --- local polynomial engine -------------------------------------------

class EmptyWindowError(DrcattError):
    pass


class SingularLocalDesignError(DrcattError):
    pass


class NuExceedsOrderError(DrcattError):
    pass


# --- estimator / bands --------------------------------------------------

class DegenerateRatioError(DrcattError):
    pass


class CurveFailedError(DrcattError):
    """Too many grid points failed while assembling a curve."""

    def __init__(self, msg, point_errors=None):
        self.point_errors = point_errors or []
        super().__init__(msg)


class BandwidthTooLargeError(DrcattError):
    """The analytic critical value is undefined at this (b - a) / h."""


class ZeroBiasError(DrcattError):
    pass


class AllPointsExcludedError(DrcattError):
    pass


class ZeroIQRError(DrcattError):
    pass


class EmptyCellError(DrcattError):
    pass


class DegenerateCellRatioError(DrcattError):
    pass
