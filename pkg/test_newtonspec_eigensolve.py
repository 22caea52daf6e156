#!/usr/bin/env python3
"""
newtonspec Eigensolver Test

Dense oracle agreement, deflation of the constants, M-orthonormality,
clusters, determinism and the error paths.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import sparse

from newtonspec_assembly import assemble_mass, assemble_stiffness
from newtonspec_eigensolve import (dense_eigenpairs, find_clusters, rayleigh_quotient,
                                   smallest_eigenpairs)
from newtonspec_errors import InvalidInputError, InvalidMassError
from newtonspec_immersion import SurfaceSpec
from newtonspec_mesh import generate


@pytest.fixture(scope="module")
def sphere_level2():
    mesh = generate(SurfaceSpec.sphere(), 2)
    return assemble_stiffness(mesh, 0), assemble_mass(mesh)


@pytest.fixture(scope="module")
def sphere_level3():
    mesh = generate(SurfaceSpec.sphere(), 3)
    return assemble_stiffness(mesh, 0), assemble_mass(mesh)


def test_diagonal_pencil():
    K = sparse.diags([0.0, 1.0, 2.0, 5.0])
    M = sparse.identity(4)
    result = smallest_eigenpairs(K, M, k=2)
    assert_allclose(result.eigenvalues, [1.0, 2.0])
    assert result.solver_name == "dense-eigh"


def test_lanczos_matches_dense_oracle(sphere_level2):
    K, M = sphere_level2
    values, _ = dense_eigenpairs(K, M)
    result = smallest_eigenpairs(K, M, k=6, solver="lanczos")
    assert result.solver_name == "shift-invert-lanczos"
    assert_allclose(result.eigenvalues, values[:6], rtol=1e-8)


def test_lobpcg_matches_dense_oracle(sphere_level2):
    K, M = sphere_level2
    values, _ = dense_eigenpairs(K, M)
    result = smallest_eigenpairs(K, M, k=3, tol=1e-6, max_iter=2000, solver="lobpcg")
    assert result.solver_name == "lobpcg-jacobi"
    assert_allclose(result.eigenvalues, values[:3], rtol=1e-6)


def test_ellipsoid_lanczos_matches_dense_oracle():
    mesh = generate(SurfaceSpec.ellipsoid([1.0, 1.3, 0.8]), 2)
    K, M = assemble_stiffness(mesh, 0), assemble_mass(mesh, lumped=False)
    values, _ = dense_eigenpairs(K, M)
    result = smallest_eigenpairs(K, M, k=4, solver="lanczos")
    assert_allclose(result.eigenvalues, values[:4], rtol=1e-8)


def test_sphere_spectrum(sphere_level3):
    K, M = sphere_level3
    result = smallest_eigenpairs(K, M, k=4)
    assert result.solver_name == "shift-invert-lanczos"
    assert result.first == pytest.approx(2.0, rel=2e-2)
    # first eigenvalue of the icosahedrally symmetric mesh is triple
    assert result.clusters[0] == (0, 3)
    assert np.all(result.residuals <= 1e-8 * (result.eigenvalues + 1.0))


def test_eigenvectors_are_normalised(sphere_level3):
    K, M = sphere_level3
    result = smallest_eigenpairs(K, M, k=4)
    U = result.eigenvectors
    assert_allclose(U.T @ (M @ U), np.eye(4), atol=1e-8)
    assert_allclose(np.ones(K.shape[0]) @ (M @ U), 0.0, atol=1e-8)
    assert np.all(U[np.argmax(np.abs(U), axis=0), np.arange(4)] > 0)


def test_rayleigh_quotient(sphere_level2):
    K, M = sphere_level2
    result = smallest_eigenpairs(K, M, k=1)
    assert rayleigh_quotient(K, M, result.eigenvectors[:, 0]) == pytest.approx(result.first, rel=1e-10)
    assert abs(rayleigh_quotient(K, M, np.ones(K.shape[0]))) <= 1e-12

    ones = np.ones(K.shape[0])
    Mones = M @ ones
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = rng.standard_normal(K.shape[0])
        v -= ones * (Mones @ v) / (ones @ Mones)
        assert rayleigh_quotient(K, M, v) >= result.first * (1.0 - 1e-10)

    with pytest.raises(InvalidInputError):
        rayleigh_quotient(K, M, np.zeros(K.shape[0]))


def test_solve_is_deterministic(sphere_level3):
    K, M = sphere_level3
    first = smallest_eigenpairs(K, M, k=4, seed=7)
    second = smallest_eigenpairs(K, M, k=4, seed=7)
    assert_array_equal(first.eigenvalues, second.eigenvalues)
    assert_array_equal(first.eigenvectors, second.eigenvectors)


@pytest.mark.parametrize("k", [0, 162])
def test_invalid_k(sphere_level2, k):
    K, M = sphere_level2
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(K, M, k=k)


def test_invalid_mass(sphere_level2):
    K, M = sphere_level2
    bad = sparse.diags(-M.diagonal())
    with pytest.raises(InvalidMassError):
        smallest_eigenpairs(K, bad, k=2)


def test_unknown_solver(sphere_level2):
    K, M = sphere_level2
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(K, M, k=2, solver="power")


def test_find_clusters():
    values = np.array([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0])
    assert find_clusters(values) == [(0, 2), (2, 1), (3, 2)]
    assert find_clusters(np.array([])) == []
