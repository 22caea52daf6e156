"""
newtonspec Newton Tensors

Generalized Kronecker symbols, the Newton tensors T^r and T^(r-1)_alpha of a
submanifold of arbitrary codimension, and the curvature invariants S_r, H_r,
S_(r+1), H_(r+1) built from them.

All sums are direct expansions over index tuples. The Kronecker symbols are
tabulated once per (n, order) by iterating over strictly increasing tuples and
their signed permutations; the pair products <B_ij, B_kl> are precomputed per
point and contracted against the table.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from newtonspec_constants import Defaults, ErrorMessages
from newtonspec_errors import InvalidIndexError, InvalidOrderError
from newtonspec_immersion import GeometrySample

logger = logging.getLogger(__name__)

_UPPER = "abcdefgh"
_LOWER = "ABCDEFGH"


@dataclass(frozen=True)
class NewtonData:
    """T^r and curvature scalars at one point"""

    r: int
    T_r: np.ndarray             # (n, n)
    S_r: float
    H_r: float
    S_next_vec: np.ndarray      # (m,) components of S_(r+1) on the normal frame
    H_next_norm2: float
    ellipticity_margin: float


@dataclass(frozen=True)
class MixedNewtonData:
    """T^(r-1)_alpha at one point"""

    r_minus_1: int
    T_alpha: np.ndarray         # (m, n, n)


@dataclass(frozen=True)
class NewtonBatch:
    """Newton data for P points, plus identity residuals"""

    r: int
    T_r: np.ndarray                     # (P, n, n)
    S_r: np.ndarray                     # (P,)
    H_r: np.ndarray
    S_next: np.ndarray                  # (P, m)
    H_next_norm2: np.ndarray
    margin: np.ndarray
    trace_residual: np.ndarray          # |trace T^r - (n-r) S_r|
    contraction_residual: np.ndarray    # contraction forms vs direct expansions

    def point(self, index: int) -> NewtonData:
        return NewtonData(
            r=self.r,
            T_r=self.T_r[index].copy(),
            S_r=float(self.S_r[index]),
            H_r=float(self.H_r[index]),
            S_next_vec=self.S_next[index].copy(),
            H_next_norm2=float(self.H_next_norm2[index]),
            ellipticity_margin=float(self.margin[index]),
        )


def _permutation_sign(perm: Sequence[int]) -> int:
    """Sign of a permutation of distinct integers (inversion count)"""
    inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
    return -1 if inversions % 2 else 1


def generalized_kronecker(upper: Sequence[int], lower: Sequence[int]) -> int:
    """
    Generalized Kronecker symbol delta^{upper}_{lower}

    Args:
        upper: index tuple (1-based)
        lower: index tuple of the same length

    Returns:
        det of the matrix [delta(upper_a, lower_b)]: the sign of the permutation
        taking lower to upper, or 0 on repeats or differing index sets

    Raises:
        InvalidIndexError: If the tuples differ in length
    """
    upper, lower = tuple(upper), tuple(lower)
    if len(upper) != len(lower):
        raise InvalidIndexError(ErrorMessages.INVALID_INDEX.format(upper=upper, lower=lower))
    if any(int(i) < 1 for i in upper + lower):
        raise InvalidIndexError(ErrorMessages.INDEX_RANGE)
    if len(set(upper)) != len(upper) or set(upper) != set(lower):
        return 0
    return _permutation_sign(upper) * _permutation_sign(lower)


@lru_cache(maxsize=None)
def kronecker_tensor(n: int, order: int) -> np.ndarray:
    """
    Table of delta^{j_1..j_k}_{i_1..i_k} for indices in 0..n-1

    Axis layout is (i_1, ..., i_k, j_1, ..., j_k). Order 0 is the scalar 1.
    """
    table = np.zeros((n,) * (2 * order))
    for combo in itertools.combinations(range(n), order):
        perms = [(p, _permutation_sign(p)) for p in itertools.permutations(combo)]
        for p, sp in perms:
            for q, sq in perms:
                table[p + q] = sp * sq
    table.setflags(write=False)
    return table


def _validate_order(r: int, n: int, odd: bool = False) -> None:
    parity_ok = (r % 2 == 1) if odd else (r % 2 == 0)
    low = 1 if odd else 0
    if not parity_ok or not (low <= r <= n - 1):
        raise InvalidOrderError(ErrorMessages.INVALID_ORDER.format(
            r=r, parity="odd" if odd else "even", low=low, high=n - 1, n=n))


def pair_products(h: np.ndarray) -> np.ndarray:
    """<B_ij, B_kl> = sum_alpha h^alpha_ij h^alpha_kl, shape (P, n, n, n, n)"""
    return np.einsum("pkab,pkcd->pabcd", h, h)


def _kronecker_contraction(h: np.ndarray, gram: np.ndarray, pairs: int,
                           with_h: bool, free: bool) -> np.ndarray:
    """
    (1/q!) sum delta^{J}_{I} <B,B>...<B,B> [h^alpha] over all index tuples

    q is the number of summed index pairs. With `free`, the last upper/lower
    slot is left open as (i, j). Output shape (P[, m][, n, n]).
    """
    P, m, n = h.shape[0], h.shape[1], h.shape[-1]
    summed = 2 * pairs + int(with_h)
    order = summed + int(free)
    delta = kronecker_tensor(n, order)

    up = list(_UPPER[:summed])
    lo = list(_LOWER[:summed])
    if free:
        up.append("X")
        lo.append("Y")
    subscripts = ["".join(up) + "".join(lo)]
    operands = [delta]
    for p in range(pairs):
        a, b = 2 * p, 2 * p + 1
        subscripts.append("z" + up[a] + lo[a] + up[b] + lo[b])
        operands.append(gram)
    if with_h:
        subscripts.append("zy" + up[summed - 1] + lo[summed - 1])
        operands.append(h)
    tail = ("y" if with_h else "") + ("XY" if free else "")

    if len(operands) == 1:
        value = np.einsum(subscripts[0] + "->" + tail, delta)
        result = np.broadcast_to(value, (P,) + np.shape(value)).copy()
    else:
        result = np.einsum(",".join(subscripts) + "->z" + tail, *operands, optimize="greedy")
    return result / math.factorial(summed)


def newton_tensor_batch(h: np.ndarray, r: int) -> NewtonBatch:
    """
    Newton tensor T^r and curvature scalars for stacked second fundamental forms

    Args:
        h: (P, m, n, n) components h^alpha_ij in orthonormal frames
        r: even order, 0 <= r <= n-1

    Raises:
        InvalidOrderError: If r is odd or out of range
    """
    h = np.asarray(h, dtype=float)
    P, m, n = h.shape[0], h.shape[1], h.shape[-1]
    _validate_order(r, n)
    pairs = r // 2

    chunks = []
    for start in range(0, P, Defaults.NEWTON_CHUNK):
        hc = h[start:start + Defaults.NEWTON_CHUNK]
        gram = pair_products(hc) if pairs else None
        T = _kronecker_contraction(hc, gram, pairs, with_h=False, free=True)
        T = 0.5 * (T + np.swapaxes(T, 1, 2))
        S = _kronecker_contraction(hc, gram, pairs, with_h=False, free=False)
        S_next_direct = _kronecker_contraction(hc, gram, pairs, with_h=True, free=False)
        # (r+1) S_(r+1)^alpha = sum_ij T^r_ij h^alpha_ij
        S_next = np.einsum("pij,pkij->pk", T, hc) / (r + 1)
        contraction = np.abs(S_next - S_next_direct).max(axis=1) if m else np.zeros(len(hc))
        if r >= 2:
            T_mixed = _kronecker_contraction(hc, gram, pairs - 1, with_h=True, free=True)
            S_from_mixed = np.einsum("pkij,pkij->p", T_mixed, hc) / r
            contraction = np.maximum(contraction, np.abs(S_from_mixed - S))
        chunks.append((T, S, S_next, contraction))

    T = np.concatenate([c[0] for c in chunks])
    S = np.concatenate([c[1] for c in chunks])
    S_next = np.concatenate([c[2] for c in chunks])
    contraction = np.concatenate([c[3] for c in chunks])

    trace_residual = np.abs(np.trace(T, axis1=1, axis2=2) - (n - r) * S)
    H = S / math.comb(n, r)
    H_next_norm2 = np.sum(S_next * S_next, axis=1) / math.comb(n, r + 1) ** 2
    margin = np.linalg.eigvalsh(T)[:, 0]
    return NewtonBatch(r=r, T_r=T, S_r=S, H_r=H, S_next=S_next, H_next_norm2=H_next_norm2,
                       margin=margin, trace_residual=trace_residual,
                       contraction_residual=contraction)


def mixed_newton_batch(h: np.ndarray, r_minus_1: int) -> np.ndarray:
    """T^(r-1)_alpha for stacked forms; returns (P, m, n, n)"""
    h = np.asarray(h, dtype=float)
    n = h.shape[-1]
    _validate_order(r_minus_1, n, odd=True)
    pairs = (r_minus_1 - 1) // 2
    gram = pair_products(h) if pairs else None
    T = _kronecker_contraction(h, gram, pairs, with_h=True, free=True)
    return 0.5 * (T + np.swapaxes(T, 2, 3))


def newton_tensor(sample: GeometrySample, r: int) -> NewtonData:
    """T^r, S_r, H_r, S_(r+1), |H_(r+1)|^2 and ellipticity margin at one point"""
    return newton_tensor_batch(sample.second_fundamental[None], r).point(0)


def mixed_newton_tensor(sample: GeometrySample, r_minus_1: int) -> MixedNewtonData:
    """T^(r-1)_alpha at one point"""
    T = mixed_newton_batch(sample.second_fundamental[None], r_minus_1)[0]
    return MixedNewtonData(r_minus_1=r_minus_1, T_alpha=T)


def elementary_symmetric(values: Sequence[float], k: int) -> float:
    """k-th elementary symmetric polynomial"""
    if k == 0:
        return 1.0
    if k > len(values):
        return 0.0
    # prod (t + v_i) = sum_k e_k t^(n-k)
    return float(np.poly(-np.asarray(values, dtype=float))[k])


def hypersurface_oracle(principal_curvatures: Sequence[float], r: int) -> np.ndarray:
    """
    Classical Newton transformation of a hypersurface by recursion

    P_0 = I, P_k = S_k I - A P_(k-1) with A = diag(principal curvatures).
    """
    kappa = np.asarray(principal_curvatures, dtype=float)
    n = kappa.size
    A = np.diag(kappa)
    P = np.eye(n)
    for k in range(1, r + 1):
        P = elementary_symmetric(kappa, k) * np.eye(n) - A @ P
    return P


def ambient_pushforward(sample: GeometrySample, nd: NewtonData) -> np.ndarray:
    """Frame-free tensor sum_ij T^r_ij e_i (x) e_j in ambient coordinates"""
    return ambient_pushforward_batch(sample.tangent_frame[None], nd.T_r[None])[0]


def ambient_pushforward_batch(tangent_frame: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Stacked version of ambient_pushforward, (P, D, D)"""
    return np.einsum("pid,pij,pje->pde", tangent_frame, T, tangent_frame)


def mean_curvature_norm2(h: np.ndarray) -> np.ndarray:
    """|H|^2 with H = (1/n) trace B, for stacked forms (P, m, n, n)"""
    n = h.shape[-1]
    trace = np.trace(h, axis1=2, axis2=3)
    return np.sum(trace * trace, axis=1) / (n * n)


def umbilicity_defect(h: np.ndarray) -> np.ndarray:
    """max_alpha |h^alpha - (trace h^alpha / n) I| per point"""
    n = h.shape[-1]
    trace = np.trace(h, axis1=2, axis2=3)
    traceless = h - trace[:, :, None, None] / n * np.eye(n)
    return np.abs(traceless).reshape(h.shape[0], -1).max(axis=1) if h.size else np.zeros(h.shape[0])
