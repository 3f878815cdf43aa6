"""
Error Types
Exception hierarchy shared by the geometry, inference, scene and CLI layers.
"""


class SamError(Exception):
    """Base class for every error raised by this package."""


# --- Configuration ---

class ConfigError(SamError, ValueError):
    """An invalid solver or generator setting."""


# --- Geometry ---

class DepthDegenerate(SamError, ArithmeticError):
    """The point lies on (or numerically at) the camera's principal plane."""

    def __init__(self, depth, message=None):
        self.depth = float(depth)
        super().__init__(message or f"homogeneous depth {self.depth:.3e} is below the degeneracy threshold")


class DegenerateGeometry(SamError, ArithmeticError):
    """A triangulation system without enough parallax to be solved."""


# --- Gaussian algebra ---

class NotPositiveDefinite(SamError, ArithmeticError):
    """A covariance or precision matrix failed Cholesky even after jitter."""


class ScopeDimMismatch(SamError, ValueError):
    """Two factors disagree on the dimension of a shared variable, or scopes do not nest."""


class SingularEliminationBlock(SamError, ArithmeticError):
    """The precision block of the variables being integrated out is not invertible."""


# --- Sigma points ---

class TransformUndefined(SamError, ArithmeticError):
    """The nonlinear map failed at one of the sigma points."""

    def __init__(self, message, cluster_id=None):
        self.cluster_id = cluster_id
        if cluster_id is not None:
            message = f"cluster {cluster_id}: {message}"
        super().__init__(message)


# --- Cluster graph ---

class UnderconstrainedFeature(SamError, ValueError):
    """A feature observed by fewer than two cameras."""

    def __init__(self, feature_id, n_views):
        self.feature_id = feature_id
        self.n_views = n_views
        super().__init__(
            f"feature {feature_id} is observed by {n_views} camera(s); at least 2 are required"
        )


class DuplicateObservation(SamError, ValueError):
    """The same (camera, feature) pair appears in more than one track."""


# --- Propagation ---

class SolveError(SamError):
    """A failure inside the outer re-linearization loop."""

    def __init__(self, iteration, cause):
        self.iteration = iteration
        super().__init__(f"outer iteration {iteration}: {cause}")


# --- Scenes & I/O ---

class InfeasibleVisibility(SamError):
    """Projection dropping left a feature or camera under-observed after every retry."""


class SceneFormatError(SamError, ValueError):
    """A scene or result document that does not follow the schema."""


class ResultMismatch(SamError, ValueError):
    """A result file that does not cover the cameras/features of its scene."""
