#!/usr/bin/env python3
"""
newtonspec Newton Tensor Test

Kronecker symbols, Newton tensors of umbilic, flat and product surfaces,
and the pointwise identities on random second fundamental forms.
"""

import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import ortho_group, special_ortho_group

from newtonspec_errors import InvalidIndexError, InvalidOrderError
from newtonspec_immersion import (GeometrySample, SurfaceSpec, flip_normal, rotate_normal_frame,
                                  rotate_tangent_frame, sample_geometry)
from newtonspec_newton import (ambient_pushforward, elementary_symmetric, generalized_kronecker,
                               hypersurface_oracle, kronecker_tensor, mean_curvature_norm2,
                               mixed_newton_tensor, newton_tensor, newton_tensor_batch,
                               umbilicity_defect)
from newtonspec_verify import random_identity_suite


@pytest.mark.parametrize("upper, lower, expected", [
    ((1, 2), (1, 2), 1),
    ((1, 2), (2, 1), -1),
    ((1, 1), (1, 1), 0),
    ((1, 2), (1, 3), 0),
    ((1, 2, 3), (2, 3, 1), 1),
    ((1, 2, 3), (2, 1, 3), -1),
    ((), (), 1),
])
def test_generalized_kronecker(upper, lower, expected):
    assert generalized_kronecker(upper, lower) == expected


def test_generalized_kronecker_errors():
    with pytest.raises(InvalidIndexError):
        generalized_kronecker((1, 2), (1,))
    with pytest.raises(InvalidIndexError):
        generalized_kronecker((0, 1), (1, 0))


def test_kronecker_table_matches_symbol():
    n, order = 3, 2
    table = kronecker_tensor(n, order)
    for lower in itertools.product(range(n), repeat=order):
        for upper in itertools.product(range(n), repeat=order):
            expected = generalized_kronecker([i + 1 for i in upper], [i + 1 for i in lower])
            assert table[lower + upper] == expected


@pytest.mark.parametrize("n, r, radius", [(2, 0, 1.0), (3, 0, 1.0), (3, 2, 1.0), (3, 2, 2.0)])
def test_sphere_newton_tensor(n, r, radius):
    spec = SurfaceSpec.sphere(radius, n=n)
    point = np.zeros(n + 1)
    point[0] = radius
    nd = newton_tensor(sample_geometry(spec, point=point), r)
    scale = math.comb(n - 1, r) / radius ** r
    assert_allclose(nd.T_r, scale * np.eye(n), atol=1e-12)
    assert nd.S_r == pytest.approx(math.comb(n, r) / radius ** r)
    assert nd.H_r == pytest.approx(radius ** -r)
    assert nd.H_next_norm2 == pytest.approx(radius ** (-2 * (r + 1)))
    assert nd.ellipticity_margin == pytest.approx(scale)


def test_flat_torus_mixed_tensor():
    sample = sample_geometry(SurfaceSpec.flat_torus(), params=[0.2, 0.9])
    mixed = mixed_newton_tensor(sample, 1)
    assert_allclose(mixed.T_alpha[0], np.diag([0.0, 1.0]), atol=1e-12)
    assert_allclose(mixed.T_alpha[1], np.diag([1.0, 0.0]), atol=1e-12)
    # S_2 = (1/2) sum_alpha <T^1_alpha, h^alpha> vanishes on the flat torus
    S_2 = 0.5 * np.einsum("kij,kij->", mixed.T_alpha, sample.second_fundamental)
    assert S_2 == pytest.approx(0.0, abs=1e-12)
    assert mean_curvature_norm2(sample.second_fundamental[None])[0] == pytest.approx(0.5)


def test_hyperplane_newton_tensor_is_degenerate():
    sample = sample_geometry(SurfaceSpec.hyperplane_patch(3), params=[0.0, 0.5, -0.5])
    nd = newton_tensor(sample, 2)
    assert_allclose(nd.T_r, 0.0, atol=1e-15)
    assert nd.ellipticity_margin == pytest.approx(0.0, abs=1e-15)
    assert_allclose(newton_tensor(sample, 0).T_r, np.eye(3))


@pytest.mark.parametrize("r", [-2, 1, 3, 4])
def test_invalid_order(r):
    sample = sample_geometry(SurfaceSpec.sphere(1.0, n=3), point=[1.0, 0.0, 0.0, 0.0])
    with pytest.raises(InvalidOrderError):
        newton_tensor(sample, r)


def test_hypersurface_oracle():
    rng = np.random.default_rng(5)
    spec = SurfaceSpec.ellipsoid([1.0, 1.4, 0.8, 1.2])
    for params in rng.uniform(0.2, 2.8, size=(10, 3)):
        sample = sample_geometry(spec, params=params)
        h = sample.second_fundamental[0]
        kappa, Q = np.linalg.eigh(h)
        oracle = Q @ hypersurface_oracle(kappa, 2) @ Q.T
        assert_allclose(newton_tensor(sample, 2).T_r, oracle, atol=1e-12)


def test_ambient_pushforward_is_frame_free():
    sample = sample_geometry(SurfaceSpec.ellipsoid([1.0, 1.4, 0.8, 1.2]), params=[0.5, 1.0, 2.0])
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((3, 3)))
    rotated = rotate_tangent_frame(sample, Q)
    before = ambient_pushforward(sample, newton_tensor(sample, 2))
    after = ambient_pushforward(rotated, newton_tensor(rotated, 2))
    assert_allclose(before, after, atol=1e-12)


def test_pushforward_at_north_pole():
    sample = sample_geometry(SurfaceSpec.sphere(), point=[0.0, 0.0, 1.0])
    assert_allclose(ambient_pushforward(sample, newton_tensor(sample, 0)), np.diag([1.0, 1.0, 0.0]),
                    atol=1e-12)


def _orthogonal(rng, size, special=False):
    if size == 1:
        return np.array([[1.0 if special else -1.0]])
    group = special_ortho_group if special else ortho_group
    return group.rvs(size, random_state=rng)


def _codimension_two_sample(rng):
    """n=3 in R^5 with a random second fundamental form"""
    frame = _orthogonal(rng, 5)
    A = rng.uniform(-2.0, 2.0, size=(2, 3, 3))
    return GeometrySample(position=np.zeros(5), tangent_frame=frame[:3], normal_frame=frame[3:],
                          second_fundamental=0.5 * (A + np.swapaxes(A, 1, 2)))


FRAME_CASES = [
    ("flattorus", 0),
    ("cliffordtorus", 0),
    ("codim2", 2),
]


def _frame_case(name, rng):
    if name == "flattorus":
        return sample_geometry(SurfaceSpec.flat_torus(1.0, 1.5), params=[0.4, 2.1])
    if name == "cliffordtorus":
        return sample_geometry(SurfaceSpec.clifford_torus(), params=[1.3, 0.2])
    return _codimension_two_sample(rng)


@pytest.mark.parametrize("name, r", FRAME_CASES)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_newton_tensor_under_frame_changes(name, r, seed):
    rng = np.random.default_rng(seed)
    sample = _frame_case(name, rng)
    n, m = sample.dim_n, sample.normal_frame.shape[0]
    Q, O = _orthogonal(rng, n, special=True), _orthogonal(rng, m)
    moved = rotate_normal_frame(rotate_tangent_frame(sample, Q), O)
    assert_allclose(moved.tangent_frame @ moved.tangent_frame.T, np.eye(n), atol=1e-12)
    assert_allclose(moved.normal_frame @ moved.tangent_frame.T, 0.0, atol=1e-12)

    before, after = newton_tensor(sample, r), newton_tensor(moved, r)
    assert_allclose(after.T_r, Q @ before.T_r @ Q.T, atol=1e-11)
    assert after.S_r == pytest.approx(before.S_r, abs=1e-11)
    assert after.H_r == pytest.approx(before.H_r, abs=1e-11)
    assert after.H_next_norm2 == pytest.approx(before.H_next_norm2, abs=1e-11)
    assert after.ellipticity_margin == pytest.approx(before.ellipticity_margin, abs=1e-11)
    assert_allclose(after.S_next_vec, O @ before.S_next_vec, atol=1e-11)
    assert_allclose(ambient_pushforward(moved, after), ambient_pushforward(sample, before), atol=1e-11)


@pytest.mark.parametrize("name", ["flattorus", "cliffordtorus", "codim2"])
def test_mixed_tensor_under_frame_changes(name):
    rng = np.random.default_rng(7)
    sample = _frame_case(name, rng)
    n, m = sample.dim_n, sample.normal_frame.shape[0]
    Q, O = _orthogonal(rng, n, special=True), _orthogonal(rng, m)
    moved = rotate_normal_frame(rotate_tangent_frame(sample, Q), O)
    before = mixed_newton_tensor(sample, 1).T_alpha
    expected = np.einsum("ab,ik,bkl,jl->aij", O, Q, before, Q)
    assert_allclose(mixed_newton_tensor(moved, 1).T_alpha, expected, atol=1e-11)


def test_flipping_a_normal():
    sample = sample_geometry(SurfaceSpec.flat_torus(), params=[0.2, 0.9])
    flipped = flip_normal(sample, 1)
    assert_allclose(flipped.normal_frame[1], -sample.normal_frame[1])
    assert_allclose(flipped.second_fundamental[1], -sample.second_fundamental[1])
    before, after = newton_tensor(sample, 0), newton_tensor(flipped, 0)
    assert_allclose(after.S_next_vec, before.S_next_vec * [1.0, -1.0], atol=1e-12)
    assert after.H_next_norm2 == pytest.approx(before.H_next_norm2)


def test_elementary_symmetric():
    assert elementary_symmetric([1.0, 2.0, 3.0], 0) == 1.0
    assert elementary_symmetric([1.0, 2.0, 3.0], 1) == pytest.approx(6.0)
    assert elementary_symmetric([1.0, 2.0, 3.0], 2) == pytest.approx(11.0)
    assert elementary_symmetric([1.0, 2.0, 3.0], 3) == pytest.approx(6.0)
    assert elementary_symmetric([1.0, 2.0], 3) == 0.0


def test_umbilicity_defect():
    h = np.zeros((2, 1, 2, 2))
    h[0, 0] = np.eye(2)
    h[1, 0] = np.diag([1.0, 3.0])
    assert_allclose(umbilicity_defect(h), [0.0, 1.0])


def test_batch_identities_on_random_forms():
    rng = np.random.default_rng(11)
    A = rng.uniform(-2.0, 2.0, size=(64, 3, 4, 4))
    h = 0.5 * (A + np.swapaxes(A, 2, 3))
    for r in (0, 2):
        nd = newton_tensor_batch(h, r)
        assert np.all(nd.trace_residual <= 1e-10 * (1.0 + np.abs(nd.S_r)))
        assert nd.contraction_residual.max() <= 1e-10
        assert_allclose(nd.T_r, np.swapaxes(nd.T_r, 1, 2), atol=0.0)


def test_random_identity_suite():
    suite = random_identity_suite(trials=1000, seed=0)
    assert suite["passed"]
    assert suite["trace_max_rel"] <= 1e-10
    assert suite["contraction_max_abs"] <= 1e-10
    assert suite["oracle_max_rel"] <= 1e-10
    assert suite["oracle_samples"] > 0
