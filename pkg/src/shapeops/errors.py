"""Exception types shared across the toolkit."""


class ShapeOpsError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ShapeOpsError):
    """A mesh or matrix file is malformed."""


class DegenerateFace(ShapeOpsError):
    """A face is degenerate (repeated vertex or area below threshold)."""


class IndexOutOfRange(ShapeOpsError):
    """A vertex index points outside the mesh."""


class IsolatedVertex(ShapeOpsError):
    """A vertex has no incident face."""


class NonFiniteCotangent(ShapeOpsError):
    """A corner angle is numerically 0 or pi, its cotangent overflows."""


class EigensolveFailure(ShapeOpsError):
    """The eigensolver did not converge or returned an invalid spectrum."""


class KTooLarge(ShapeOpsError):
    """Requested more eigenpairs than the mesh has vertices."""


class DimensionMismatch(ShapeOpsError):
    """Operand dimensions are inconsistent."""


class NegativeSpectrum(ShapeOpsError):
    """A matrix that must be positive semi-definite is not, beyond tolerance."""


class NonDiagonalizable(ShapeOpsError):
    """Eigenvector matrix is too ill-conditioned for a spectral function."""


class ComplexBranch(ShapeOpsError):
    """Matrix logarithm hit eigenvalues with a non-negligible imaginary part."""


class SingularMap(ShapeOpsError):
    """Functional map is not invertible and the pseudo-inverse fallback is off."""


class DegenerateConfiguration(ShapeOpsError):
    """Point configuration does not determine a unique rigid alignment."""


class ConnectivityMismatch(ShapeOpsError):
    """Two meshes that must share connectivity do not."""


class ShapeMismatch(ShapeOpsError):
    """Network input shape does not match the model."""


class NonFiniteLoss(ShapeOpsError):
    """Training loss became NaN or infinite."""


class EmptyDataset(ShapeOpsError):
    """An operation that needs at least one sample got none."""
