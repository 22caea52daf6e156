"""
newtonspec Constants and Parameters

This module contains the default run parameters, numerical tolerances,
exit codes and error messages shared by the newtonspec modules.
"""


class SurfaceNames:
    """CLI names of the catalog surfaces"""

    SPHERE = "sphere"                # sphere:R
    ELLIPSOID = "ellipsoid"          # ellipsoid:a1,a2,...
    FLAT_TORUS = "flattorus"         # flattorus:r1,r2
    CLIFFORD_TORUS = "cliffordtorus" # cliffordtorus:r1,r2
    HYPERPLANE = "hyperplane"        # hyperplane (no parameters)

    ALL = (SPHERE, ELLIPSOID, FLAT_TORUS, CLIFFORD_TORUS, HYPERPLANE)


# Default values
class Defaults:
    """Default run parameters"""

    LEVEL = 3
    EIGS = 4
    TOL = 1e-8
    MAX_ITER = 1000
    QUAD_ORDER = None              # None = order 1 for r=0, order 2 otherwise
    LUMPED = True                  # verify, spectrum
    CONVERGE_LUMPED = False        # converge: lambda_1 decreases with the level
    SEED = 0
    THREADS = 1
    TOL_DISCR = 0.03
    LEMMA_TRIALS = 100
    IDENTITY_SAMPLES = 200
    FRAME_CHANGES = 20             # samples re-evaluated in a random frame
    SPHERE_DIM = 2

    TORUS_BASE_CELLS = 8           # cells per direction at level 0
    ASSEMBLY_CHUNK = 4096          # elements per assembly block
    NEWTON_CHUNK = 8192            # quadrature points per Newton block
    DENSE_THRESHOLD = 200          # dimension below which eigh is used

    DELTA_GRID = tuple(range(-6, 7))   # exponents k of 2**k * delta*

    SHIFT_FACTOR = 1e-2            # sigma = SHIFT_FACTOR * trace(K)/trace(M)/dim


class Tolerances:
    """Numerical tolerances"""

    ON_SURFACE = 1e-9              # |F(p) - 1| for implicit surfaces
    FRAME_PIVOT = 1e-12            # Gram-Schmidt pivot
    FRAME_ORTHONORMAL = 1e-10
    CLIFFORD_RADII = 1e-12         # |r1^2 + r2^2 - 1|
    ELEMENT_VOLUME = 1e-14         # Gram-determinant volume
    CLUSTER_GAP = 1e-6             # relative eigenvalue gap of a cluster
    LEMMA_RELATIVE = 1e-10
    EQUALITY_DEFECT = 1e-8         # umbilicity or r-minimal defect of an equality case
    DELTA_CENTRE = 0.5             # |log2(centre/minimiser)| for a minimal grid centre
    MASS_POSITIVE = 0.0


class ExitCodes:
    """Process exit codes of the command line"""

    OK = 0
    INVALID_INPUT = 1
    INEQUALITY_VIOLATED = 2
    NOT_ELLIPTIC = 3
    NOT_CONVERGED = 4
    IO_ERROR = 5


class ReportFormat:
    """Report serialisation constants"""

    SCHEMA = "newtonspec-report/1"
    MESH_HEADER = "newtonspec-mesh"
    MESH_VERSION = 1
    FLOAT_DIGITS = 17
    FORMATS = ("json", "csv")


# Error messages
class ErrorMessages:
    """Error messages for various conditions"""

    INVALID_CURVATURE = "Ambient curvature c must be 0 or 1, got {c}"
    INVALID_DIMENSION = "Submanifold dimension {n} must be below ambient dimension {N}"
    INVALID_SHAPE = "Invalid shape parameters for {kind}: {params}"
    INVALID_KIND_DIM = "{kind} does not support n={n}"
    INVALID_KIND_CURVATURE = "{kind} requires c={required}, got c={c}"
    CLIFFORD_RADII = "Clifford torus radii must satisfy r1^2 + r2^2 = 1, got {value}"
    UNKNOWN_SURFACE = "Unknown surface '{name}'; expected one of {names}"
    OFF_SURFACE = "Point is off the surface (residual {residual:.3e})"
    DEGENERATE_FRAME = "Degenerate frame (pivot {pivot:.3e})"
    MISSING_POINT = "Either params or point must be given"
    INVALID_ORDER = "Order r={r} must be {parity} and in [{low}, {high}] for n={n}"
    INVALID_INDEX = "Index tuples must have equal length, got {upper} and {lower}"
    INDEX_RANGE = "Kronecker indices must be positive (1-based)"
    UNSUPPORTED_MESH = "No closed mesh for {kind} with n={n}"
    DEGENERATE_ELEMENT = "Element {element} is degenerate (volume {volume:.3e})"
    INVALID_QUADRATURE = "Quadrature order must be 1 or 2, got {order}"
    NOT_ELLIPTIC = "L_{r} is not elliptic: margin {margin:.3e} at {point}"
    NOT_CONVERGED = "Eigensolver did not converge after {iterations} iterations"
    INVALID_MASS = "Mass matrix is not symmetric positive definite"
    INVALID_EIGS = "Need 1 <= k and k + 1 <= dimension, got k={k}, dimension={dim}"
    ZERO_VECTOR = "Rayleigh quotient of the zero vector"
    INVALID_FORMAT = "Report format must be one of {formats}, got {fmt}"
    REPORT_WRITE = "Cannot write report to {path}: {reason}"
    MESH_READ = "Cannot parse mesh file {path}: {reason}"
    INVALID_LEVELS = "Levels must be ascending and non-negative, got {levels}"
    UNKNOWN_CONFIG = "Unknown run options: {keys}"
    INVALID_DELTA = "Lemma delta centre must be positive, got {delta}"
