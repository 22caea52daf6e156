"""
newtonspec FEM Assembly

Sparse stiffness matrix of -L_r = -div(T^r grad .) and the P1 mass matrix on
an embedded simplicial mesh.

    K[a, b] = sum_e sum_q w_q |e| <T_elem(q) grad phi_a, grad phi_b>

grad phi are the flat hat-function gradients in the affine span of each
simplex. T^r is evaluated at the on-surface preimage of the quadrature point
and carried to the simplex plane by the orthogonal polar factor of F E^T
(F: orthonormal simplex frame, E: surface tangent frame), so T = c I maps to
c P_elem exactly and r=0 reproduces the cotangent matrix.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.io
from scipy import sparse
from scipy.sparse.linalg import splu

from newtonspec_constants import Defaults, ErrorMessages
from newtonspec_errors import NotEllipticError, ReportWriteError
from newtonspec_mesh import (QuadratureRule, SimplicialMesh, element_measures, quadrature,
                             quadrature_geometry, vertex_geometry)
from newtonspec_newton import (NewtonBatch, mean_curvature_norm2,
                               newton_tensor_batch, umbilicity_defect)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoefficientField:
    """Newton data at every quadrature point of a mesh (element-major order)"""

    r: int
    rule: QuadratureRule
    measures: np.ndarray        # (E,)
    weights: np.ndarray         # (E, q) = |e| * w_q
    positions: np.ndarray       # (E*q, D)
    newton: NewtonBatch         # E*q points
    tangent_frame: np.ndarray   # (E*q, n, D)
    mean_curvature2: np.ndarray # (E*q,) |H|^2
    umbilicity: np.ndarray      # (E*q,)

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature of a per-point integrand with flat-simplex measure"""
        return float(np.sum(self.weights * np.asarray(values).reshape(self.weights.shape)))

    @property
    def ellipticity_min(self) -> float:
        return float(self.newton.margin.min())


@dataclass(frozen=True)
class WeakResidual:
    """Residuals of the weak identity for L_r(x), per ambient coordinate"""

    per_coordinate: np.ndarray  # dual energy norm per coordinate
    total: float
    mass_norm_total: float


def default_quadrature_order(r: int) -> int:
    """Order 1 suffices for the constant coefficient at r=0"""
    return 1 if r == 0 else 2


def evaluate_coefficients(mesh: SimplicialMesh, r: int, order: Optional[int] = None) -> CoefficientField:
    """Evaluate T^r and the curvature scalars at all quadrature points"""
    start = time.perf_counter()
    rule = quadrature(order or default_quadrature_order(r), mesh.dim_n)
    measures = element_measures(mesh)
    geometry = quadrature_geometry(mesh, rule)
    newton = newton_tensor_batch(geometry.second_fundamental, r)
    field = CoefficientField(
        r=r,
        rule=rule,
        measures=measures,
        weights=measures[:, None] * rule.weights[None, :],
        positions=geometry.position,
        newton=newton,
        tangent_frame=geometry.tangent_frame,
        mean_curvature2=mean_curvature_norm2(geometry.second_fundamental),
        umbilicity=umbilicity_defect(geometry.second_fundamental),
    )
    logger.info("coefficients r=%d at %d quadrature points in %.3fs (ellipticity min %.3e)",
                r, len(geometry), time.perf_counter() - start, field.ellipticity_min)
    return field


def require_elliptic(field: CoefficientField) -> None:
    """
    Raises:
        NotEllipticError: If T^r is not positive definite at some quadrature point
    """
    worst = int(np.argmin(field.newton.margin))
    margin = float(field.newton.margin[worst])
    if margin <= 0.0:
        point = field.positions[worst]
        raise NotEllipticError(
            ErrorMessages.NOT_ELLIPTIC.format(r=field.r, margin=margin, point=np.round(point, 6).tolist()),
            point=point, margin=margin)


def element_frames(mesh: SimplicialMesh, elements: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthonormal simplex frames and hat gradients in frame coordinates

    Returns:
        F (E, n, D) with rows spanning each simplex plane, and the gradients
        of the barycentric hat functions as (E, n+1, n) coordinates in F
    """
    if elements is None:
        elements = np.arange(mesh.element_count)
    X = mesh.vertices[mesh.elements[elements]]
    edges = X[:, 1:] - X[:, :1]
    # edges^T = Q R, so edge_j has F-coordinates R[:, j] and grad lambda_k = row k of R^-1
    q, r = np.linalg.qr(np.swapaxes(edges, 1, 2))
    grads = np.linalg.inv(r)
    grads = np.concatenate([-grads.sum(axis=1, keepdims=True), grads], axis=1)
    return np.swapaxes(q, 1, 2), grads


def hat_gradients(mesh: SimplicialMesh, elements: Optional[np.ndarray] = None) -> np.ndarray:
    """Ambient gradients of the barycentric hat functions, shape (E, n+1, D)"""
    frames, grads = element_frames(mesh, elements)
    return np.einsum("eai,eid->ead", grads, frames)


def transfer_to_elements(frames: np.ndarray, tangent_frame: np.ndarray, T: np.ndarray) -> np.ndarray:
    """
    Carry T^r from the surface tangent frame to the simplex frame

    Args:
        frames: (E, n, D) simplex frames F
        tangent_frame: (E, q, n, D) surface frames at the quadrature points
        T: (E, q, n, n) T^r in the surface frames

    Returns:
        (E, q, n, n) coefficient in simplex coordinates, Q T Q^T with Q the
        orthogonal polar factor of F E^T
    """
    overlap = np.einsum("eid,eqjd->eqij", frames, tangent_frame)
    u, _, vt = np.linalg.svd(overlap)
    rotation = u @ vt
    return rotation @ T @ np.swapaxes(rotation, -1, -2)


def _assemble(mesh: SimplicialMesh, local_blocks, threads: int) -> sparse.csr_matrix:
    """Merge per-chunk local matrices in fixed element order"""
    E = mesh.element_count
    chunks = [np.arange(s, min(s + Defaults.ASSEMBLY_CHUNK, E)) for s in range(0, E, Defaults.ASSEMBLY_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(local_blocks, chunks))
    else:
        blocks = [local_blocks(c) for c in chunks]

    k = mesh.dim_n + 1
    rows = np.broadcast_to(mesh.elements[:, :, None], (E, k, k)).ravel()
    cols = np.broadcast_to(mesh.elements[:, None, :], (E, k, k)).ravel()
    data = np.concatenate([b.reshape(-1) for b in blocks])
    V = mesh.vertex_count
    A = sparse.coo_matrix((data, (rows, cols)), shape=(V, V)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return ((A + A.T) * 0.5).tocsr()


def assemble_stiffness(mesh: SimplicialMesh, r: int, order: Optional[int] = None,
                       field: Optional[CoefficientField] = None, threads: int = Defaults.THREADS) -> sparse.csr_matrix:
    """
    Stiffness matrix of -L_r with linear elements

    Args:
        mesh: Closed simplicial mesh (its spec supplies the geometry)
        r: Even curvature order
        order: Quadrature order (default 1 for r=0, 2 otherwise)
        field: Precomputed coefficient field (must match r and order)
        threads: Worker threads for the element loop

    Raises:
        NotEllipticError: If T^r is not positive definite at some quadrature point
    """
    start = time.perf_counter()
    if field is None:
        field = evaluate_coefficients(mesh, r, order)
    require_elliptic(field)
    q = field.rule.weights.size
    n = mesh.dim_n
    T = field.newton.T_r.reshape(mesh.element_count, q, n, n)
    tangent = field.tangent_frame.reshape(mesh.element_count, q, n, -1)

    def local_blocks(elements: np.ndarray) -> np.ndarray:
        frames, grads = element_frames(mesh, elements)
        coefficient = transfer_to_elements(frames, tangent[elements], T[elements])
        local = np.einsum("eq,eai,eqij,ebj->eab", field.weights[elements], grads, coefficient, grads)
        return 0.5 * (local + np.swapaxes(local, 1, 2))

    K = _assemble(mesh, local_blocks, threads)
    logger.info("stiffness r=%d: %d x %d, nnz %d in %.3fs", r, K.shape[0], K.shape[1], K.nnz,
                time.perf_counter() - start)
    return K


def assemble_mass(mesh: SimplicialMesh, lumped: bool = Defaults.LUMPED) -> sparse.csr_matrix:
    """Consistent P1 mass matrix, or its row-sum lumped diagonal"""
    measures = element_measures(mesh)
    k = mesh.dim_n + 1
    V = mesh.vertex_count
    if lumped:
        diag = np.bincount(mesh.elements.ravel(), weights=np.repeat(measures / k, k), minlength=V)
        return sparse.diags(diag, format="csr")
    local_template = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))

    def local_blocks(elements: np.ndarray) -> np.ndarray:
        return measures[elements, None, None] * local_template[None]

    return _assemble(mesh, local_blocks, threads=1)


def cotangent_stiffness(mesh: SimplicialMesh) -> sparse.csr_matrix:
    """Classical cotangent-weight Laplacian of a triangle mesh (independent r=0 check)"""
    t = mesh.elements
    v1, v2, v3 = (mesh.vertices[t[:, k]] for k in range(3))
    v2mv1, v3mv2, v1mv3 = v2 - v1, v3 - v2, v1 - v3
    cr = np.linalg.norm(np.cross(v3mv2, v1mv3), axis=1)
    # -cot / 2 per edge, opposite vertex as in the classical formula
    a12 = np.sum(v3mv2 * v1mv3, axis=1) / (2.0 * cr)
    a23 = np.sum(v1mv3 * v2mv1, axis=1) / (2.0 * cr)
    a31 = np.sum(v2mv1 * v3mv2, axis=1) / (2.0 * cr)
    a11, a22, a33 = -a12 - a31, -a12 - a23, -a31 - a23
    data = np.column_stack((a12, a12, a23, a23, a31, a31, a11, a22, a33)).ravel()
    i = np.column_stack((t[:, 0], t[:, 1], t[:, 1], t[:, 2], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2])).ravel()
    j = np.column_stack((t[:, 1], t[:, 0], t[:, 2], t[:, 1], t[:, 0], t[:, 2], t[:, 0], t[:, 1], t[:, 2])).ravel()
    V = mesh.vertex_count
    return sparse.csr_matrix((data, (i, j)), shape=(V, V))


def mass_inverse_apply(M: sparse.spmatrix):
    """Return a callable x -> M^-1 x (exact diagonal inverse when lumped)"""
    diag = M.diagonal()
    if (M - sparse.diags(diag)).count_nonzero() == 0:
        return lambda x: x / (diag[:, None] if np.ndim(x) == 2 else diag)
    lu = splu(sparse.csc_matrix(M))
    return lu.solve


def lr_of_position(mesh: SimplicialMesh, r: int) -> np.ndarray:
    """
    Vertex interpolant of L_r(x) = (r+1) S_(r+1) - c (n-r) S_r x, shape (V, D)
    """
    geometry = vertex_geometry(mesh)
    newton = newton_tensor_batch(geometry.second_fundamental, r)
    S_next = np.einsum("pk,pkd->pd", newton.S_next, geometry.normal_frame)
    c, n = mesh.spec.curvature_c, mesh.dim_n
    return (r + 1) * S_next - c * (n - r) * newton.S_r[:, None] * geometry.position


def weak_residual_Lr_x(mesh: SimplicialMesh, r: int, K: Optional[sparse.spmatrix] = None,
                       M: Optional[sparse.spmatrix] = None, order: Optional[int] = None) -> WeakResidual:
    """
    Discrete residual of the identity for L_r(x)

    R_A = -K x_A - M g_A for every ambient coordinate A, where g is the vertex
    interpolant of the analytic right side. R_A is a functional on the P1
    space, so it is measured in the dual energy norm sqrt(R^T (K + M)^-1 R);
    the total is the l2 norm over A. The M^-1 norm, a pointwise measure of
    the discrete operator, is reported alongside.
    """
    if K is None:
        K = assemble_stiffness(mesh, r, order)
    if M is None:
        M = assemble_mass(mesh, lumped=True)
    g = lr_of_position(mesh, r)
    residual = -(K @ mesh.vertices) - M @ g

    energy = splu(sparse.csc_matrix(K + M))
    per = np.sqrt(np.maximum(np.einsum("va,va->a", residual, energy.solve(residual)), 0.0))
    solve = mass_inverse_apply(M)
    per_mass = np.sqrt(np.maximum(np.einsum("va,va->a", residual, solve(residual)), 0.0))
    result = WeakResidual(per_coordinate=per, total=float(np.linalg.norm(per)),
                          mass_norm_total=float(np.linalg.norm(per_mass)))
    logger.debug("weak L_%d(x) residual %.3e (per coordinate %s, M^-1 norm %.3e)", r, result.total,
                 np.array2string(per, precision=3), result.mass_norm_total)
    return result


def export_matrix(A: sparse.spmatrix, path: str, comment: str = "") -> None:
    """Write a symmetric matrix in MatrixMarket coordinate format (1-based)"""
    try:
        with open(path, "wb") as handle:
            scipy.io.mmwrite(handle, sparse.coo_matrix(A), comment=comment, symmetry="symmetric")
    except OSError as e:
        raise ReportWriteError(ErrorMessages.REPORT_WRITE.format(path=path, reason=e), path=path)
