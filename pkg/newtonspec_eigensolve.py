"""
newtonspec Generalized Eigensolver

Smallest nonzero eigenpairs of K u = lambda M u for a symmetric positive
semidefinite K whose kernel is the constants and an SPD mass M.

The constant mode is deflated in the M inner product. The primary solver is
shift-invert Lanczos (ARPACK) with an LU factorisation of K + sigma M; LOBPCG
with a Jacobi preconditioner and the constant vector as constraint is the
fallback, and small problems are solved densely.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, lobpcg, splu

from newtonspec_constants import Defaults, ErrorMessages, Tolerances
from newtonspec_errors import InvalidInputError, InvalidMassError, NotConvergedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralResult:
    """k smallest nonzero eigenpairs, ascending, eigenvectors M-orthonormal"""

    eigenvalues: np.ndarray                 # (k,)
    eigenvectors: np.ndarray                # (V, k)
    residuals: np.ndarray                   # (k,)
    iterations: int
    solver_name: str
    clusters: List[Tuple[int, int]] = field(default_factory=list)  # (start, size)

    @property
    def first(self) -> float:
        return float(self.eigenvalues[0])


def find_clusters(values: np.ndarray, gap: float = Tolerances.CLUSTER_GAP) -> List[Tuple[int, int]]:
    """Group sorted eigenvalues whose relative gap is below `gap`"""
    clusters = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > gap * max(abs(values[i]), np.finfo(float).tiny):
            clusters.append((start, i - start))
            start = i
    return clusters


def rayleigh_quotient(K: sparse.spmatrix, M: sparse.spmatrix, v: np.ndarray) -> float:
    """v^T K v / v^T M v"""
    v = np.asarray(v, dtype=float)
    denominator = float(v @ (M @ v))
    if not np.any(v) or denominator <= 0.0:
        raise InvalidInputError(ErrorMessages.ZERO_VECTOR)
    return float(v @ (K @ v)) / denominator


def pair_residuals(K: sparse.spmatrix, M: sparse.spmatrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """||K u - lambda M u|| / ||u||_M per eigenpair"""
    Mu = M @ vectors
    R = K @ vectors - Mu * values[None, :]
    return np.linalg.norm(R, axis=0) / np.sqrt(np.maximum(np.einsum("vk,vk->k", vectors, Mu), 1e-300))


def _check_mass(M: sparse.spmatrix) -> None:
    diag = M.diagonal()
    asym = abs(M - M.T)
    if diag.size == 0 or diag.min() <= Tolerances.MASS_POSITIVE or (asym.nnz and asym.max() > 1e-12 * diag.max()):
        raise InvalidMassError(ErrorMessages.INVALID_MASS)


def _constant_deflation(M: sparse.spmatrix):
    """M-orthogonal projector onto the complement of the constants"""
    ones = np.ones(M.shape[0])
    Mones = M @ ones
    norm = float(ones @ Mones)

    def deflate(x: np.ndarray) -> np.ndarray:
        if x.ndim == 1:
            return x - ones * (Mones @ x) / norm
        return x - np.outer(ones, Mones @ x) / norm

    return deflate


def _finish(K, M, values, vectors, k, iterations, solver_name, tol) -> SpectralResult:
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    # M-normalise and fix the sign so the largest-magnitude entry is positive
    vectors = vectors / np.sqrt(np.einsum("vk,vk->k", vectors, M @ vectors))[None, :]
    pivots = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
    vectors = vectors * np.sign(pivots)[None, :]
    residuals = pair_residuals(K, M, values, vectors)
    clusters = [c for c in find_clusters(values) if c[0] < k]
    logger.debug("%s: %d iterations, eigenvalues %s, residuals %s, clusters %s", solver_name, iterations,
                 np.array2string(values[:k], precision=10), np.array2string(residuals[:k], precision=2), clusters)
    if np.any(residuals[:k] > tol * (np.abs(values[:k]) + 1.0)):
        raise NotConvergedError(ErrorMessages.NOT_CONVERGED.format(iterations=iterations),
                                residuals=residuals[:k], iterations=iterations)
    return SpectralResult(eigenvalues=values[:k], eigenvectors=vectors[:, :k], residuals=residuals[:k],
                          iterations=iterations, solver_name=solver_name, clusters=clusters)


def dense_eigenpairs(K: sparse.spmatrix, M: sparse.spmatrix) -> Tuple[np.ndarray, np.ndarray]:
    """All nonzero eigenpairs of the dense pencil, constant mode removed"""
    values, vectors = scipy.linalg.eigh(sparse.csr_matrix(K).toarray(), sparse.csr_matrix(M).toarray())
    ones = np.ones(K.shape[0])
    overlap = np.abs(ones @ (M @ vectors))
    keep = np.ones(values.size, dtype=bool)
    keep[int(np.argmax(overlap))] = False
    return values[keep], vectors[:, keep]


def _shift(K: sparse.spmatrix, M: sparse.spmatrix) -> float:
    return Defaults.SHIFT_FACTOR * float(np.mean(K.diagonal() / M.diagonal()))


def _lanczos(K, M, kk, tol, max_iter, rng, deflate) -> Tuple[np.ndarray, np.ndarray, int]:
    dim = K.shape[0]
    sigma = _shift(K, M)
    lu = splu(sparse.csc_matrix(K + sigma * M))
    applications = [0]

    def apply(x):
        applications[0] += 1
        return deflate(lu.solve(np.asarray(x, dtype=float).ravel()))

    op = LinearOperator(shape=K.shape, matvec=apply, dtype=float)
    v0 = deflate(rng.standard_normal(dim))
    ncv = min(dim - 1, max(2 * kk + 1, 20))
    try:
        values, vectors = eigsh(K, k=kk, M=M, sigma=-sigma, which="LM", OPinv=op, v0=v0,
                                tol=0.0, maxiter=max_iter, ncv=ncv)
    except ArpackNoConvergence:
        raise NotConvergedError(ErrorMessages.NOT_CONVERGED.format(iterations=applications[0]),
                                iterations=applications[0])
    return values, vectors, applications[0]


def _lobpcg(K, M, kk, tol, max_iter, rng) -> Tuple[np.ndarray, np.ndarray, int]:
    dim = K.shape[0]
    sigma = _shift(K, M)
    jacobi = 1.0 / (K.diagonal() + sigma * M.diagonal())
    precond = LinearOperator(shape=K.shape, matvec=lambda x: jacobi * np.asarray(x).ravel(),
                             matmat=lambda X: jacobi[:, None] * X, dtype=float)
    X0 = rng.standard_normal((dim, kk))
    values, vectors, history = lobpcg(K, X0, B=M, M=precond, Y=np.ones((dim, 1)), tol=tol,
                                      maxiter=max_iter, largest=False, retResidualNormsHistory=True)
    return values, vectors, len(history)


def smallest_eigenpairs(K: sparse.spmatrix, M: sparse.spmatrix, k: int = Defaults.EIGS,
                        tol: float = Defaults.TOL, max_iter: int = Defaults.MAX_ITER,
                        seed: int = Defaults.SEED, solver: Optional[str] = None) -> SpectralResult:
    """
    k smallest nonzero eigenpairs of K u = lambda M u with the constants deflated

    Args:
        K: Symmetric positive semidefinite stiffness, kernel = constants
        M: SPD mass
        k: Number of eigenpairs
        tol: Relative residual tolerance ||K u - lambda M u|| <= tol (lambda + 1)
        max_iter: Iteration cap of the iterative solvers
        seed: Seed of the random starting vectors
        solver: Force 'dense', 'lanczos' or 'lobpcg' (default: automatic)

    Raises:
        InvalidInputError: If k is out of range
        InvalidMassError: If M is not symmetric positive definite
        NotConvergedError: If the residuals stay above tolerance
    """
    K, M = sparse.csr_matrix(K), sparse.csr_matrix(M)
    dim = K.shape[0]
    if k < 1 or k + 1 > dim:
        raise InvalidInputError(ErrorMessages.INVALID_EIGS.format(k=k, dim=dim))
    _check_mass(M)
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    kk = min(k + max(2, k // 2), dim - 1)

    if solver is None:
        solver = "dense" if dim <= Defaults.DENSE_THRESHOLD or kk + 1 >= dim - 1 else "lanczos"

    if solver == "dense":
        try:
            values, vectors = dense_eigenpairs(K, M)
        except np.linalg.LinAlgError:
            raise InvalidMassError(ErrorMessages.INVALID_MASS)
        result = _finish(K, M, values, vectors, k, 1, "dense-eigh", tol)
    elif solver == "lanczos":
        try:
            values, vectors, iterations = _lanczos(K, M, kk, tol, max_iter, rng, _constant_deflation(M))
            result = _finish(K, M, values, vectors, k, iterations, "shift-invert-lanczos", tol)
        except (RuntimeError, NotConvergedError) as e:
            logger.warning("shift-invert Lanczos failed (%s), falling back to LOBPCG", e)
            return smallest_eigenpairs(K, M, k, tol, max_iter, seed, solver="lobpcg")
    elif solver == "lobpcg":
        values, vectors, iterations = _lobpcg(K, M, kk, tol, max_iter, rng)
        result = _finish(K, M, values, vectors, k, iterations, "lobpcg-jacobi", tol)
    else:
        raise InvalidInputError(ErrorMessages.UNKNOWN_CONFIG.format(keys=[solver]))

    logger.info("eigensolve %s: dim %d, lambda_1 = %.12g in %.3fs", result.solver_name, dim,
                result.first, time.perf_counter() - start)
    return result
