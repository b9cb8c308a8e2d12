"""Linearly parametrized Brunovsky transformations of a staircase pair.

Every admissible observation matrix ``C`` is built from rank-constrained blocks
``S_r`` and free blocks ``S_f``. The chains ``C_j A^i`` then give the state
transformation ``T``, the decoupling matrix ``D`` and ``C* = col(C_j A^k_j)``,
from which ``G = D^-1`` and ``F = -D^-1 C*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import (
    EPS,
    HypothesisViolated,
    IndexSummary,
    ParameterSet,
    ShapeMismatch,
    SingularD,
    SingularT,
    StaircasePair,
    TransformTriple,
    brunovsky_target,
)

INVERTIBILITY_FACTOR = 1e3


def is_invertible(M: np.ndarray, sigma: np.ndarray | None = None) -> bool:
    """``sigma_min > sigma_max * n * eps * 1e3``; empty matrices count as invertible."""
    if M.size == 0:
        return True
    if sigma is None:
        sigma = np.linalg.svd(M, compute_uv=False)
    return bool(sigma[-1] > sigma[0] * M.shape[0] * EPS * INVERTIBILITY_FACTOR)


@dataclass(frozen=True)
class ObservationMatrix:
    """Parametric ``C = col(C_j)`` with per-group row and column ranges."""

    C: np.ndarray
    row_slices: tuple[slice, ...]
    rank_slices: tuple[slice, ...]
    free_slices: tuple[slice, ...]

    def group(self, j: int) -> np.ndarray:
        return self.C[self.row_slices[j]]


@dataclass(frozen=True)
class ChainMatrices:
    """Quantities that are linear in the parameters, before any inversion."""

    T: np.ndarray
    D: np.ndarray
    C_star: np.ndarray
    C: np.ndarray


def _check_shapes(params: ParameterSet, idx: IndexSummary) -> None:
    if len(params.S_r) != idx.g or len(params.S_f) != idx.g:
        raise ShapeMismatch(f"expected {idx.g} parameter groups, got {len(params.S_r)}/{len(params.S_f)}")
    for j in range(idx.g):
        eps_k = idx.multiplicities[j]
        want_r = (eps_k, idx.weyr_at_k[j])
        want_f = (eps_k, idx.trailing_weyr_sums[j])
        if params.S_r[j].shape != want_r or params.S_f[j].shape != want_f:
            raise ShapeMismatch(
                f"group {j + 1}: S_r {params.S_r[j].shape} / S_f {params.S_f[j].shape}, "
                f"expected {want_r} / {want_f}"
            )


def build_observation_matrix(params: ParameterSet, idx: IndexSummary, stair: StaircasePair | None = None):
    """Assemble ``C`` with a zero prefix of width ``sum_{i<k_j} omega_i`` per group."""
    _check_shapes(params, idx)
    if stair is not None and tuple(stair.weyr) != tuple(idx.weyr):
        raise ShapeMismatch("staircase and index summary disagree on the Weyr characteristics")
    C = np.zeros((idx.m, idx.n))
    rows, rank_cols, free_cols = [], [], []
    r = 0
    for j, (k, eps_k) in enumerate(zip(idx.distinct, idx.multiplicities)):
        start = idx.zero_prefix_widths[j]
        mid = start + idx.weyr_at_k[j]
        rs = slice(r, r + eps_k)
        C[rs, start:mid] = params.S_r[j]
        C[rs, mid:] = params.S_f[j]
        rows.append(rs)
        rank_cols.append(slice(start, mid))
        free_cols.append(slice(mid, idx.n))
        r += eps_k
    return ObservationMatrix(C, tuple(rows), tuple(rank_cols), tuple(free_cols))


def rank_constraint_matrices(params: ParameterSet, stair: StaircasePair, idx: IndexSummary) -> list[np.ndarray]:
    """``S_r[1]`` and the stacked squares ``[A^s_{k_j+1,k_j}; S_r[j]]`` for ``j >= 2``."""
    _check_shapes(params, idx)
    mats = [np.asarray(params.S_r[0])]
    for j in range(1, idx.g):
        k = idx.distinct[j]
        mats.append(np.vstack([stair.block(k + 1, k), params.S_r[j]]))
    return mats


def check_rank_constraints(params: ParameterSet, stair: StaircasePair, idx: IndexSummary) -> np.ndarray:
    """Smallest singular value of each rank-constrained square matrix."""
    return np.array(
        [np.linalg.svd(M, compute_uv=False)[-1] for M in rank_constraint_matrices(params, stair, idx)]
    )


def rank_constraints_satisfied(params: ParameterSet, stair: StaircasePair, idx: IndexSummary) -> bool:
    return all(is_invertible(M) for M in rank_constraint_matrices(params, stair, idx))


def stacked_factor_matrix(S_blocks: Sequence[np.ndarray], A_blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Stack ``S_i A_i ... A_1`` for ``i = p, ..., 1`` (top to bottom)."""
    rows = []
    prod = None
    for S, A in zip(S_blocks, A_blocks):
        prod = A if prod is None else A @ prod
        rows.append(S @ prod)
    return np.vstack(rows[::-1])


def _check_factor_hypotheses(S_blocks, A_blocks):
    p = len(A_blocks)
    if p == 0 or len(S_blocks) != p:
        raise HypothesisViolated("need p >= 1 matching S and A blocks")
    m = A_blocks[0].shape[0]
    r = [m]
    for i, A in enumerate(A_blocks):
        if A.ndim != 2 or A.shape[1] != r[-1] or (i == 0 and A.shape[0] != m):
            raise HypothesisViolated(f"A_{i + 1} has shape {A.shape}, expected (*, {r[-1]})")
        if A.shape[0] > r[-1]:
            raise HypothesisViolated(f"A_{i + 1} has more rows than columns")
        s = np.linalg.svd(A, compute_uv=False)
        if A.shape[0] and not s[-1] > s[0] * max(A.shape) * EPS:
            raise HypothesisViolated(f"A_{i + 1} is not of full row rank")
        r.append(A.shape[0])
    for i, S in enumerate(S_blocks):
        want = r[i + 1] - (r[i + 2] if i + 1 < p else 0)
        if S.ndim != 2 or S.shape != (want, r[i + 1]):
            raise HypothesisViolated(f"S_{i + 1} has shape {S.shape}, expected {(want, r[i + 1])}")


def factored_invertibility(S_blocks: Sequence[np.ndarray], A_blocks: Sequence[np.ndarray]) -> bool:
    """Decide invertibility of the stacked product matrix from its small factors.

    ``S_blocks[i]`` and ``A_blocks[i]`` are ``S_{i+1}`` and ``A_{i+1}``. The
    stacked matrix is invertible iff ``S_p`` and every ``[A_i; S_{i-1}]``,
    ``i = p..2``, are invertible.
    """
    S_blocks = [np.atleast_2d(np.asarray(S, dtype=float)) for S in S_blocks]
    A_blocks = [np.atleast_2d(np.asarray(A, dtype=float)) for A in A_blocks]
    _check_factor_hypotheses(S_blocks, A_blocks)
    p = len(A_blocks)
    if not is_invertible(S_blocks[p - 1]):
        return False
    return all(is_invertible(np.vstack([A_blocks[i], S_blocks[i - 1]])) for i in range(p - 1, 0, -1))


def decoupling_factors(params: ParameterSet, stair: StaircasePair, idx: IndexSummary):
    """Express ``D`` of a parameter set as stacked factors (``S_i`` may be empty)."""
    by_k = dict(zip(idx.distinct, params.S_r))
    A_blocks = [stair.block(i, i - 1) for i in range(1, idx.mu_max + 1)]
    S_blocks = [by_k.get(i, np.zeros((0, idx.weyr[i - 1]))) for i in range(1, idx.mu_max + 1)]
    return S_blocks, A_blocks


def default_parameters(stair: StaircasePair, idx: IndexSummary) -> ParameterSet:
    """Identity for the longest chains, orthonormal row-space complements otherwise, zero ``S_f``."""
    S_r, S_f = [], []
    for j, (k, eps_k) in enumerate(zip(idx.distinct, idx.multiplicities)):
        if j == 0:
            S_r.append(np.eye(eps_k))
        else:
            below = stair.block(k + 1, k)
            S_r.append(scipy.linalg.null_space(below).T[:eps_k] if below.size else np.eye(eps_k))
        S_f.append(np.zeros((eps_k, idx.trailing_weyr_sums[j])))
    return ParameterSet(tuple(S_r), tuple(S_f))


def chain_matrices(params: ParameterSet, A: np.ndarray, B: np.ndarray, idx: IndexSummary) -> ChainMatrices:
    """``T``, ``D`` and ``C*`` from the row chains ``C A^i``.

    The chain ``R_{i+1} = R_i A`` is computed once and shared by all three.
    """
    obs = build_observation_matrix(params, idx)
    C = obs.C
    chains = [C]
    for _ in range(idx.mu_max):
        chains.append(chains[-1] @ A)
    T_rows, D_rows, C_star_rows = [], [], []
    for j, k in enumerate(idx.distinct):
        rs = obs.row_slices[j]
        for row in range(rs.start, rs.stop):
            T_rows.extend(chains[i][row] for i in range(k))
        D_rows.append(chains[k - 1][rs] @ B)
        C_star_rows.append(chains[k][rs])
    return ChainMatrices(np.array(T_rows), np.vstack(D_rows), np.vstack(C_star_rows), C)


class PivotedQR:
    """Column-pivoted QR of a square matrix, used for solves instead of inverses."""

    def __init__(self, M: np.ndarray):
        self.Q, self.R, self.perm = scipy.linalg.qr(M, pivoting=True)

    def solve(self, Y: np.ndarray) -> np.ndarray:
        """``M^-1 Y``."""
        Z = scipy.linalg.solve_triangular(self.R, self.Q.T @ Y)
        X = np.empty_like(Z)
        X[self.perm] = Z
        return X

    def rsolve(self, Y: np.ndarray) -> np.ndarray:
        """``Y M^-1``."""
        YP = Y[:, self.perm]
        Z = scipy.linalg.solve_triangular(self.R, YP.T, trans="T").T
        return Z @ self.Q.T

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.R.shape[0]))


def similarity(T: np.ndarray, M: np.ndarray, T_fact: PivotedQR | None = None) -> np.ndarray:
    """``T M T^-1`` via a pivoted factorization of ``T``."""
    T_fact = T_fact or PivotedQR(T)
    return T_fact.rsolve(T @ M)


def brunovsky_residuals(A, B, T, F, G, mu) -> tuple[float, float]:
    """Frobenius errors of ``T (A + B F) T^-1`` and ``T B G`` against the target pair."""
    target = brunovsky_target(mu)
    A_hat = similarity(T, A + B @ F)
    B_hat = T @ B @ G
    return float(np.linalg.norm(A_hat - target.A_b)), float(np.linalg.norm(B_hat - target.B_b))


def build_transformations(params: ParameterSet, A: np.ndarray, B: np.ndarray, idx: IndexSummary) -> TransformTriple:
    """Brunovsky transformation ``(T, F, G)`` of a staircase-structured pair.

    ``A`` may be the staircase matrix itself or its deadbeat-preprocessed
    version. The returned diagnostics hold both residuals and the kappa and
    omega condition numbers of ``T`` and ``G``.

    Raises
    ------
    SingularD, SingularT
        If ``D`` or ``T`` is numerically singular.
    """
    from .conditioning import condition_report

    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    ch = chain_matrices(params, A, B, idx)
    sD = np.linalg.svd(ch.D, compute_uv=False)
    if not is_invertible(ch.D, sD):
        raise SingularD(f"decoupling matrix is singular (sigma_min={sD[-1]:.3e}, sigma_max={sD[0]:.3e})")
    sT = np.linalg.svd(ch.T, compute_uv=False)
    if not is_invertible(ch.T, sT):
        raise SingularT(f"state transformation is singular (sigma_min={sT[-1]:.3e}, sigma_max={sT[0]:.3e})")
    D_fact = PivotedQR(ch.D)
    G = D_fact.inverse()
    F = -D_fact.solve(ch.C_star)
    err_A, err_B = brunovsky_residuals(A, B, ch.T, F, G, idx.mu)
    rT = condition_report(ch.T)
    rG = condition_report(G)
    diagnostics = {
        "residual_A": err_A,
        "residual_B": err_B,
        "kappa_T": rT.kappa,
        "kappa_G": rG.kappa,
        "omega_T": rT.omega,
        "omega_G": rG.omega,
    }
    return TransformTriple(ch.T, F, G, idx.mu, diagnostics)


def random_parameters(idx: IndexSummary, rng) -> ParameterSet:
    """Standard normal blocks; satisfies the rank constraints with probability one."""
    rng = np.random.default_rng(rng)
    S_r = tuple(rng.standard_normal((e, w)) for e, w in zip(idx.multiplicities, idx.weyr_at_k))
    S_f = tuple(rng.standard_normal((e, t)) for e, t in zip(idx.multiplicities, idx.trailing_weyr_sums))
    return ParameterSet(S_r, S_f)
