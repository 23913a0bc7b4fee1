"""Exception taxonomy shared by all poireg modules."""


class PoiRegError(Exception):
    """Base class for all poireg errors."""


class ParseError(PoiRegError):
    """A CSV cell could not be parsed, or rows are ragged."""


class ShapeMismatch(PoiRegError):
    """Predictor and response files disagree on the number of rows."""


class DegenerateResponse(PoiRegError):
    """A response vector has (numerically) zero standard deviation."""


class SingularBasis(PoiRegError):
    """A basis Gram matrix is numerically singular, or the assembled
    penalty is not positive definite."""


class DeltaOutOfRange(PoiRegError):
    """The window width delta does not quantize to an admissible offset."""


class IndexOutOfInterior(PoiRegError):
    """A grid index falls outside the interior set admissible for the
    given window width."""


class DeltaNotHalvable(PoiRegError):
    """The quantized offset is odd, so delta/2 is not grid-exact."""


class ZeroDenominator(PoiRegError):
    """The half-width second-moment sum vanishes; the smoothness ratio
    is undefined."""


class DuplicatePoI(PoiRegError):
    """The same grid index appears twice in an impact-point set."""


class SingularSystem(PoiRegError):
    """The regularized normal-equation matrix is numerically singular
    (collinear impact-point columns)."""


class AllRhoInvalid(PoiRegError):
    """Every candidate smoothing parameter was skipped (smoother trace
    too large)."""


class CollinearPoIColumns(PoiRegError):
    """Impact-point regressor columns are collinear in a subset fit."""


class AllDeltaFailed(PoiRegError):
    """Every delta in the search grid failed; no fit is available."""


class TauOffGrid(PoiRegError):
    """A requested impact location does not lie on the sampling grid."""


class EigenFailure(PoiRegError):
    """The covariance eigendecomposition did not converge."""
