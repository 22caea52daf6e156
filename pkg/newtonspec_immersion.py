"""
newtonspec Immersion Catalog

This module defines the closed test submanifolds and evaluates their exact
pointwise differential geometry (orthonormal frames and second fundamental
form) from analytic formulas.

Two flavours are supported:

* implicit surfaces (Sphere, Ellipsoid), given by F(x) = sum (x_i/a_i)^2 = 1
  and evaluated at ambient points;
* parametric surfaces (FlatTorusR4, CliffordTorusS3, HyperplanePatch),
  evaluated at chart parameters.

For c=1 the submanifold lies in the unit sphere S^N inside R^(N+1) and the
radial direction is excluded from the normal bundle.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from newtonspec_constants import ErrorMessages, SurfaceNames, Tolerances
from newtonspec_errors import (DegenerateFrameError, InvalidInputError,
                               InvalidSurfaceError, OffSurfaceError)

logger = logging.getLogger(__name__)


class SurfaceKind(Enum):
    """Catalog surface kinds, valued by their CLI name"""

    SPHERE = SurfaceNames.SPHERE
    ELLIPSOID = SurfaceNames.ELLIPSOID
    FLAT_TORUS = SurfaceNames.FLAT_TORUS
    CLIFFORD_TORUS = SurfaceNames.CLIFFORD_TORUS
    HYPERPLANE_PATCH = SurfaceNames.HYPERPLANE


IMPLICIT_KINDS = (SurfaceKind.SPHERE, SurfaceKind.ELLIPSOID)
TORUS_KINDS = (SurfaceKind.FLAT_TORUS, SurfaceKind.CLIFFORD_TORUS)


@dataclass(frozen=True)
class AmbientSpace:
    """Space form R^N(c) with c in {0, 1}"""

    curvature_c: int
    ambient_dim_N: int

    def __post_init__(self):
        if self.curvature_c not in (0, 1):
            raise InvalidSurfaceError(ErrorMessages.INVALID_CURVATURE.format(c=self.curvature_c))
        if self.ambient_dim_N < 1:
            raise InvalidSurfaceError(
                ErrorMessages.INVALID_DIMENSION.format(n="?", N=self.ambient_dim_N))

    @property
    def coordinate_dim(self) -> int:
        """Number of ambient coordinates (N, or N+1 inside the unit sphere)"""
        return self.ambient_dim_N + self.curvature_c


@dataclass(frozen=True)
class SurfaceSpec:
    """A catalog submanifold x: M^n -> R^N(c)"""

    kind: SurfaceKind
    dim_n: int
    shape_params: Tuple[float, ...]
    ambient: AmbientSpace

    def __post_init__(self):
        object.__setattr__(self, "shape_params", tuple(float(p) for p in self.shape_params))
        n, N, c = self.dim_n, self.ambient.ambient_dim_N, self.ambient.curvature_c
        if not (1 <= n < N):
            raise InvalidSurfaceError(ErrorMessages.INVALID_DIMENSION.format(n=n, N=N))
        if any(not math.isfinite(p) or p <= 0 for p in self.shape_params):
            raise InvalidSurfaceError(
                ErrorMessages.INVALID_SHAPE.format(kind=self.kind.value, params=self.shape_params))

        expected = {
            SurfaceKind.SPHERE: (1, (2, 3), 0, n + 1),
            SurfaceKind.ELLIPSOID: (n + 1, (2, 3), 0, n + 1),
            SurfaceKind.FLAT_TORUS: (2, (2,), 0, 4),
            SurfaceKind.CLIFFORD_TORUS: (2, (2,), 1, 3),
            SurfaceKind.HYPERPLANE_PATCH: (0, (1, 2, 3, 4), 0, n + 1),
        }[self.kind]
        param_count, dims, required_c, required_N = expected
        if n not in dims:
            raise InvalidSurfaceError(ErrorMessages.INVALID_KIND_DIM.format(kind=self.kind.value, n=n))
        if c != required_c:
            raise InvalidSurfaceError(ErrorMessages.INVALID_KIND_CURVATURE.format(
                kind=self.kind.value, required=required_c, c=c))
        if len(self.shape_params) != param_count or N != required_N:
            raise InvalidSurfaceError(
                ErrorMessages.INVALID_SHAPE.format(kind=self.kind.value, params=self.shape_params))
        if self.kind == SurfaceKind.CLIFFORD_TORUS:
            r1, r2 = self.shape_params
            if abs(r1 * r1 + r2 * r2 - 1.0) > Tolerances.CLIFFORD_RADII:
                raise InvalidSurfaceError(ErrorMessages.CLIFFORD_RADII.format(value=r1 * r1 + r2 * r2))

    # Catalog constructors
    @classmethod
    def sphere(cls, radius: float = 1.0, n: int = 2) -> "SurfaceSpec":
        """Round sphere of the given radius in R^(n+1)"""
        return cls(SurfaceKind.SPHERE, n, (radius,), AmbientSpace(0, n + 1))

    @classmethod
    def ellipsoid(cls, axes: Sequence[float]) -> "SurfaceSpec":
        """Ellipsoid with semi-axes a_1..a_(n+1) in R^(n+1)"""
        n = len(axes) - 1
        return cls(SurfaceKind.ELLIPSOID, n, tuple(axes), AmbientSpace(0, n + 1))

    @classmethod
    def flat_torus(cls, r1: float = 1.0, r2: float = 1.0) -> "SurfaceSpec":
        """Product torus S^1(r1) x S^1(r2) in R^4"""
        return cls(SurfaceKind.FLAT_TORUS, 2, (r1, r2), AmbientSpace(0, 4))

    @classmethod
    def clifford_torus(cls, r1: float = 1 / math.sqrt(2), r2: Optional[float] = None) -> "SurfaceSpec":
        """Torus S^1(r1) x S^1(r2) in the unit sphere S^3, r1^2 + r2^2 = 1"""
        if r2 is None:
            r2 = math.sqrt(max(0.0, 1.0 - r1 * r1))
        return cls(SurfaceKind.CLIFFORD_TORUS, 2, (r1, r2), AmbientSpace(1, 3))

    @classmethod
    def hyperplane_patch(cls, n: int = 2) -> "SurfaceSpec":
        """Flat coordinate patch R^n x {0} in R^(n+1)"""
        return cls(SurfaceKind.HYPERPLANE_PATCH, n, (), AmbientSpace(0, n + 1))

    @property
    def codimension(self) -> int:
        """Number of normal directions (N - n)"""
        return self.ambient.ambient_dim_N - self.dim_n

    @property
    def coordinate_dim(self) -> int:
        return self.ambient.coordinate_dim

    @property
    def curvature_c(self) -> int:
        return self.ambient.curvature_c

    @property
    def is_implicit(self) -> bool:
        return self.kind in IMPLICIT_KINDS

    @property
    def axes(self) -> np.ndarray:
        """Semi-axes of an implicit surface"""
        if self.kind == SurfaceKind.SPHERE:
            return np.full(self.dim_n + 1, self.shape_params[0])
        if self.kind == SurfaceKind.ELLIPSOID:
            return np.asarray(self.shape_params)
        raise InvalidSurfaceError(ErrorMessages.INVALID_SHAPE.format(
            kind=self.kind.value, params=self.shape_params))

    @property
    def descriptor(self) -> str:
        """CLI packing of this surface, e.g. 'sphere:1'"""
        if not self.shape_params:
            return self.kind.value
        return self.kind.value + ":" + ",".join(f"{p:.17g}" for p in self.shape_params)


@dataclass(frozen=True)
class GeometrySample:
    """Pointwise first and second fundamental data at one surface point"""

    position: np.ndarray            # (D,)
    tangent_frame: np.ndarray       # (n, D) rows e_i
    normal_frame: np.ndarray        # (m, D) rows e_alpha
    second_fundamental: np.ndarray  # (m, n, n) h^alpha_ij
    measure_weight: float = 1.0

    @property
    def dim_n(self) -> int:
        return self.tangent_frame.shape[0]

    @property
    def codimension(self) -> int:
        return self.normal_frame.shape[0]

    def second_fundamental_vector(self, i: int, j: int) -> np.ndarray:
        """B_ij = sum_alpha h^alpha_ij e_alpha as an ambient vector (0-based i, j)"""
        return self.second_fundamental[:, i, j] @ self.normal_frame


@dataclass(frozen=True)
class GeometryBatch:
    """Stacked GeometrySample data for P points"""

    position: np.ndarray            # (P, D)
    tangent_frame: np.ndarray       # (P, n, D)
    normal_frame: np.ndarray        # (P, m, D)
    second_fundamental: np.ndarray  # (P, m, n, n)
    measure_weight: np.ndarray      # (P,)

    def __len__(self) -> int:
        return self.position.shape[0]

    def sample(self, index: int) -> GeometrySample:
        return GeometrySample(
            position=self.position[index].copy(),
            tangent_frame=self.tangent_frame[index].copy(),
            normal_frame=self.normal_frame[index].copy(),
            second_fundamental=self.second_fundamental[index].copy(),
            measure_weight=float(self.measure_weight[index]),
        )


@dataclass(frozen=True)
class OrientationConvention:
    """How the normal frame of a surface is chosen"""

    rule: str
    description: str
    codimension: int


def parse_surface(text: str, dim: int = 2, c: Optional[int] = None) -> SurfaceSpec:
    """
    Parse a CLI surface packing such as 'sphere:1' or 'ellipsoid:1,1,1.5'

    Args:
        text: '<name>' or '<name>:<p1>,<p2>,...'
        dim: sphere / hyperplane dimension n (ignored by the other kinds)
        c: ambient curvature; validated against the kind when given

    Returns:
        The validated SurfaceSpec
    """
    name, _, packed = text.strip().partition(":")
    name = name.strip().lower()
    try:
        params = [float(p) for p in packed.split(",") if p.strip()]
    except ValueError:
        raise InvalidSurfaceError(ErrorMessages.INVALID_SHAPE.format(kind=name, params=packed))

    allowed = {
        SurfaceNames.SPHERE: (0, 1),
        SurfaceNames.ELLIPSOID: (3, 4),
        SurfaceNames.FLAT_TORUS: (0, 2),
        SurfaceNames.CLIFFORD_TORUS: (0, 1, 2),
        SurfaceNames.HYPERPLANE: (0,),
    }
    if name in allowed and len(params) not in allowed[name]:
        raise InvalidSurfaceError(ErrorMessages.INVALID_SHAPE.format(kind=name, params=packed))

    if name == SurfaceNames.SPHERE:
        spec = SurfaceSpec.sphere(params[0] if params else 1.0, n=dim)
    elif name == SurfaceNames.ELLIPSOID:
        spec = SurfaceSpec.ellipsoid(params)
    elif name == SurfaceNames.FLAT_TORUS:
        spec = SurfaceSpec.flat_torus(*(params or [1.0, 1.0]))
    elif name == SurfaceNames.CLIFFORD_TORUS:
        spec = SurfaceSpec.clifford_torus(*params)
    elif name == SurfaceNames.HYPERPLANE:
        spec = SurfaceSpec.hyperplane_patch(dim)
    else:
        raise InvalidSurfaceError(ErrorMessages.UNKNOWN_SURFACE.format(
            name=name, names=", ".join(SurfaceNames.ALL)))

    if c is not None and c != spec.curvature_c:
        raise InvalidSurfaceError(ErrorMessages.INVALID_KIND_CURVATURE.format(
            kind=spec.kind.value, required=spec.curvature_c, c=c))
    return spec


def normal_orientation(spec: SurfaceSpec) -> OrientationConvention:
    """Return the normal orientation convention used for the surface"""
    m = spec.codimension
    if spec.kind in IMPLICIT_KINDS:
        return OrientationConvention(
            "inward", "normal chosen so the unit sphere has h_ij = +delta_ij (inward)", m)
    if spec.kind == SurfaceKind.FLAT_TORUS:
        return OrientationConvention(
            "circle-factor-inward",
            "one inward normal per circle factor, ordered by factor", m)
    if spec.kind == SurfaceKind.CLIFFORD_TORUS:
        return OrientationConvention(
            "tangent-to-sphere",
            "unit normal inside S^3 orthogonal to the position, pointing towards the first circle axis", m)
    return OrientationConvention(
        "canonical-complement",
        "Gram-Schmidt of the canonical basis complement in fixed order", m)


# Chart helpers

def _hypersphere_from_angles(angles: np.ndarray) -> np.ndarray:
    """Map (P, n) hyperspherical angles to unit vectors in R^(n+1)"""
    P, n = angles.shape
    out = np.ones((P, n + 1))
    running = np.ones(P)
    for k in range(n):
        out[:, k] = running * np.cos(angles[:, k])
        running = running * np.sin(angles[:, k])
    out[:, n] = running
    return out


def project_to_surface(spec: SurfaceSpec, points: np.ndarray) -> np.ndarray:
    """Radial-then-affine projection of ambient points onto an implicit surface"""
    a = spec.axes
    scaled = np.asarray(points, dtype=float) / a
    norms = np.linalg.norm(scaled, axis=-1, keepdims=True)
    if np.any(norms < Tolerances.FRAME_PIVOT):
        raise OffSurfaceError(ErrorMessages.OFF_SURFACE.format(residual=1.0))
    return scaled / norms * a


def implicit_residual(spec: SurfaceSpec, points: np.ndarray) -> np.ndarray:
    """|F(p) - 1| with F(x) = sum (x_i/a_i)^2"""
    scaled = np.asarray(points, dtype=float) / spec.axes
    return np.abs(np.sum(scaled * scaled, axis=-1) - 1.0)


def _torus_chart(spec: SurfaceSpec, params: np.ndarray):
    """Positions, first and second partials of the product torus chart"""
    r1, r2 = spec.shape_params
    u, v = params[:, 0], params[:, 1]
    cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
    zero = np.zeros_like(u)
    x = np.stack([r1 * cu, r1 * su, r2 * cv, r2 * sv], axis=-1)
    xu = np.stack([-r1 * su, r1 * cu, zero, zero], axis=-1)
    xv = np.stack([zero, zero, -r2 * sv, r2 * cv], axis=-1)
    xuu = np.stack([-r1 * cu, -r1 * su, zero, zero], axis=-1)
    xvv = np.stack([zero, zero, -r2 * cv, -r2 * sv], axis=-1)
    xuv = np.zeros_like(x)
    partials = np.stack([xu, xv], axis=1)
    second = np.stack([np.stack([xuu, xuv], axis=1), np.stack([xuv, xvv], axis=1)], axis=1)

    if spec.kind == SurfaceKind.FLAT_TORUS:
        nu1 = np.stack([-cu, -su, zero, zero], axis=-1)
        nu2 = np.stack([zero, zero, -cv, -sv], axis=-1)
        normals = np.stack([nu1, nu2], axis=1)
    else:
        normals = np.stack([r2 * cu, r2 * su, -r1 * cv, -r1 * sv], axis=-1)[:, None, :]
    return x, partials, second, normals


def _hyperplane_chart(spec: SurfaceSpec, params: np.ndarray):
    P, n = params.shape
    D = spec.coordinate_dim
    x = np.zeros((P, D))
    x[:, :n] = params
    partials = np.broadcast_to(np.eye(n, D), (P, n, D)).copy()
    second = np.zeros((P, n, n, D))
    return x, partials, second, None


def chart_points(spec: SurfaceSpec, params: np.ndarray) -> np.ndarray:
    """Ambient positions of chart parameters (P, n) -> (P, D)"""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if spec.is_implicit:
        return _hypersphere_from_angles(params) * spec.axes
    if spec.kind in TORUS_KINDS:
        return _torus_chart(spec, params)[0]
    return _hyperplane_chart(spec, params)[0]


def random_surface_points(spec: SurfaceSpec, count: int, rng: np.random.Generator):
    """
    Draw random surface points

    Returns:
        ('point', (count, D) array) for implicit surfaces or
        ('params', (count, n) array) for parametric surfaces
    """
    if spec.is_implicit:
        g = rng.standard_normal((count, spec.dim_n + 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return "point", g * spec.axes
    if spec.kind in TORUS_KINDS:
        return "params", rng.uniform(0.0, 2 * np.pi, size=(count, 2))
    return "params", rng.uniform(-1.0, 1.0, size=(count, spec.dim_n))


# Frames

def _complement_frame(columns: np.ndarray, count: int) -> np.ndarray:
    """
    Orthonormal complement of the span of `columns` (P, D, k)

    Householder QR in complete mode; the last `count` columns of Q span the
    complement. Returns rows (P, count, D).
    """
    q, r = np.linalg.qr(columns, mode="complete")
    k = columns.shape[2]
    pivots = np.abs(np.diagonal(r, axis1=1, axis2=2))
    if pivots.size and pivots.min() < Tolerances.FRAME_PIVOT:
        raise DegenerateFrameError(ErrorMessages.DEGENERATE_FRAME.format(pivot=pivots.min()))
    return np.swapaxes(q[:, :, k:k + count], 1, 2)


def _implicit_batch(spec: SurfaceSpec, points: np.ndarray) -> GeometryBatch:
    residual = implicit_residual(spec, points)
    worst = float(residual.max()) if residual.size else 0.0
    if worst > Tolerances.ON_SURFACE:
        raise OffSurfaceError(ErrorMessages.OFF_SURFACE.format(residual=worst))

    inv_a2 = 1.0 / spec.axes ** 2
    grad = points * inv_a2                      # half gradient of F
    grad_norm = np.linalg.norm(grad, axis=1)
    if grad_norm.min() < Tolerances.FRAME_PIVOT:
        raise DegenerateFrameError(ErrorMessages.DEGENERATE_FRAME.format(pivot=grad_norm.min()))
    nu = -grad / grad_norm[:, None]
    tangent = _complement_frame(nu[:, :, None], spec.dim_n)
    # h_ij = e_i^T Hess(F/2) e_j / |grad(F/2)|
    h = np.einsum("pid,d,pjd->pij", tangent, inv_a2, tangent) / grad_norm[:, None, None]
    return GeometryBatch(
        position=points.copy(),
        tangent_frame=tangent,
        normal_frame=nu[:, None, :],
        second_fundamental=h[:, None, :, :],
        measure_weight=np.ones(points.shape[0]),
    )


def _parametric_batch(spec: SurfaceSpec, params: np.ndarray) -> GeometryBatch:
    if spec.kind in TORUS_KINDS:
        x, partials, second, normals = _torus_chart(spec, params)
    else:
        x, partials, second, normals = _hyperplane_chart(spec, params)

    # J^T = Q R with positive diag(R); tangent frame e = Q^T, e_i = sum_a C_ai x_a
    q, r = np.linalg.qr(np.swapaxes(partials, 1, 2))
    diag = np.diagonal(r, axis1=1, axis2=2)
    if np.abs(diag).min() < Tolerances.FRAME_PIVOT:
        raise DegenerateFrameError(ErrorMessages.DEGENERATE_FRAME.format(pivot=np.abs(diag).min()))
    signs = np.sign(diag)
    q = q * signs[:, None, :]
    r = r * signs[:, :, None]
    tangent = np.swapaxes(q, 1, 2)
    coeff = np.linalg.inv(r)

    if normals is None:
        columns = np.swapaxes(tangent, 1, 2)
        if spec.curvature_c == 1:
            columns = np.concatenate([columns, x[:, :, None]], axis=2)
        normals = _complement_frame(columns, spec.codimension)

    hess_normal = np.einsum("pabd,pkd->pkab", second, normals)
    h = np.einsum("pai,pkab,pbj->pkij", coeff, hess_normal, coeff)
    h = 0.5 * (h + np.swapaxes(h, 2, 3))
    gram = np.einsum("pad,pbd->pab", partials, partials)
    return GeometryBatch(
        position=x,
        tangent_frame=tangent,
        normal_frame=normals,
        second_fundamental=h,
        measure_weight=np.sqrt(np.linalg.det(gram)),
    )


def sample_geometry_batch(spec: SurfaceSpec, params: Optional[np.ndarray] = None,
                          points: Optional[np.ndarray] = None) -> GeometryBatch:
    """
    Evaluate frames and second fundamental forms at many surface points

    Args:
        spec: Catalog surface
        params: (P, n) chart parameters (hyperspherical angles for implicit surfaces)
        points: (P, D) ambient points on an implicit surface

    Raises:
        OffSurfaceError: If an ambient point is not on the surface
        DegenerateFrameError: If a frame pivot vanishes
    """
    if points is not None:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not spec.is_implicit:
            raise InvalidInputError(ErrorMessages.MISSING_POINT)
        if points.shape[1] != spec.coordinate_dim:
            raise OffSurfaceError(ErrorMessages.OFF_SURFACE.format(residual=float("inf")))
        return _implicit_batch(spec, points)
    if params is None:
        raise InvalidInputError(ErrorMessages.MISSING_POINT)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[1] != spec.dim_n or not np.all(np.isfinite(params)):
        raise OffSurfaceError(ErrorMessages.OFF_SURFACE.format(residual=float("inf")))
    if spec.is_implicit:
        return _implicit_batch(spec, chart_points(spec, params))
    return _parametric_batch(spec, params)


def sample_geometry(spec: SurfaceSpec, params: Optional[Sequence[float]] = None,
                    point: Optional[Sequence[float]] = None) -> GeometrySample:
    """Evaluate the geometry at a single surface point (see sample_geometry_batch)"""
    batch = sample_geometry_batch(
        spec,
        params=None if params is None else np.asarray(params, dtype=float)[None],
        points=None if point is None else np.asarray(point, dtype=float)[None],
    )
    return batch.sample(0)


def frame_defect(batch: GeometryBatch, curvature_c: int = 0) -> float:
    """Largest deviation of the frames from orthonormality (and from x for c=1)"""
    frame = np.concatenate([batch.tangent_frame, batch.normal_frame], axis=1)
    gram = np.einsum("pad,pbd->pab", frame, frame)
    defect = float(np.abs(gram - np.eye(frame.shape[1])).max())
    if curvature_c == 1:
        radial = np.einsum("pad,pd->pa", frame, batch.position)
        defect = max(defect, float(np.abs(radial).max()),
                     float(np.abs(np.linalg.norm(batch.position, axis=1) - 1.0).max()))
    return defect


def rotate_tangent_frame(sample: GeometrySample, rotation: np.ndarray) -> GeometrySample:
    """Apply e_i -> sum_k Q_ik e_k and the matching congruence h -> Q h Q^T"""
    rotation = np.asarray(rotation, dtype=float)
    return replace(
        sample,
        tangent_frame=rotation @ sample.tangent_frame,
        second_fundamental=np.einsum("ik,akl,jl->aij", rotation, sample.second_fundamental, rotation),
    )


def rotate_normal_frame(sample: GeometrySample, orthogonal: np.ndarray) -> GeometrySample:
    """Apply e_alpha -> sum_beta O_alpha_beta e_beta and h^alpha -> sum_beta O_alpha_beta h^beta"""
    orthogonal = np.asarray(orthogonal, dtype=float)
    return replace(
        sample,
        normal_frame=orthogonal @ sample.normal_frame,
        second_fundamental=np.einsum("ab,bij->aij", orthogonal, sample.second_fundamental),
    )


def flip_normal(sample: GeometrySample, alpha: int) -> GeometrySample:
    """Negate the normal e_alpha (0-based) together with h^alpha"""
    signs = np.ones(sample.codimension)
    signs[alpha] = -1.0
    return rotate_normal_frame(sample, np.diag(signs))
