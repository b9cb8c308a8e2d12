"""Orthogonal reduction of (A, B) to staircase form and the integer data it exposes."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import (
    EPS,
    EmptyOrNonDescending,
    InconsistentWeyr,
    IndexSummary,
    LinearSystem,
    StaircasePair,
    Uncontrollable,
)


def reduce_to_staircase(sys: LinearSystem) -> StaircasePair:
    """Reduce a validated pair to staircase form by stage-wise SVDs.

    Stage 1 compresses B into its top ``m`` rows. Stage ``i`` compresses the
    part of the previous stair column that lies below the processed rows; its
    numerical rank is the Weyr characteristic ``omega_i``. All rank decisions
    share one threshold, ``sigma_max([A, B]) * max(n, m) * eps``.

    Raises
    ------
    Uncontrollable
        If a stage finds rank zero before all ``n`` states are reached.
    """
    A = np.array(sys.A, dtype=float)
    B = np.array(sys.B, dtype=float)
    n, m = B.shape
    tol = np.linalg.norm(np.hstack([A, B]), 2) * max(n, m) * EPS

    W, s, _ = np.linalg.svd(B)
    if np.sum(s > tol) < m:
        # validate_system uses a relative threshold; [A, B] may dwarf B
        raise Uncontrollable(f"B loses rank at stage 1 (relative to ||[A B]||)", 1, 0)
    factors = [(0, W.T)]
    B = W.T @ B
    B[m:, :] = 0.0
    A = W.T @ A @ W

    weyr = [m]
    row, col = m, 0
    while row < n:
        width = weyr[-1]
        sub = A[row:, col : col + width]
        W, s, _ = np.linalg.svd(sub)
        rank = int(np.sum(s > tol))
        if rank == 0:
            raise Uncontrollable(
                f"staircase stage {len(weyr) + 1} has rank 0; only {row} of {n} states reachable",
                len(weyr) + 1,
                row,
            )
        factors.append((row, W.T))
        A[row:, :] = W.T @ A[row:, :]
        A[:, row:] = A[:, row:] @ W
        A[row + rank :, col : col + width] = 0.0
        weyr.append(rank)
        col, row = row, row + rank

    U = np.eye(n)
    for start, Q in factors:
        U[start:, :] = Q @ U[start:, :]
    _zero_below_stair(A, weyr)
    return StaircasePair(A, B, U, weyr)


def _zero_below_stair(A: np.ndarray, weyr: Sequence[int]) -> None:
    off = np.concatenate([[0], np.cumsum(weyr)])
    for i in range(2, len(weyr)):
        A[off[i] :, off[i - 2] : off[i - 1]] = 0.0


def zero_below_stair(A: np.ndarray, weyr: Sequence[int]) -> np.ndarray:
    """Copy of ``A`` with every entry below the staircase set to exactly zero."""
    A = np.array(A, dtype=float)
    _zero_below_stair(A, weyr)
    return A


def conjugate_partition(p: Sequence[int]) -> list[int]:
    """Transpose of the Ferrers diagram of a descending partition.

    >>> conjugate_partition([4, 4, 2, 2, 2, 1])
    [6, 5, 2, 2]
    """
    p = [int(x) for x in p]
    if not p or p[-1] < 1 or any(a < b for a, b in zip(p, p[1:])):
        raise EmptyOrNonDescending(f"expected a nonempty descending partition, got {p}")
    return [sum(1 for x in p if x > i) for i in range(p[0])]


def index_summary(weyr, stair: StaircasePair | None = None) -> IndexSummary:
    """Controllability indices, distinct values, multiplicities and parameter counts.

    ``weyr`` may also be a :class:`StaircasePair`, whose Weyr characteristics are
    then used.
    """
    if isinstance(weyr, StaircasePair):
        stair, weyr = weyr, weyr.weyr
    weyr = tuple(int(w) for w in weyr)
    if not weyr or weyr[-1] < 1 or any(a < b for a, b in zip(weyr, weyr[1:])):
        raise InconsistentWeyr(f"Weyr characteristics must be descending and positive: {list(weyr)}")
    if stair is not None and (sum(weyr) != stair.n or weyr[0] != stair.m):
        raise InconsistentWeyr(
            f"sum of Weyr characteristics {sum(weyr)} != n = {stair.n} or omega_1 != m = {stair.m}"
        )
    mu = tuple(conjugate_partition(weyr))
    ext = weyr + (0,)
    distinct, mult = [], []
    for k in range(len(weyr), 0, -1):
        eps_k = ext[k - 1] - ext[k]
        if eps_k > 0:
            distinct.append(k)
            mult.append(eps_k)
    at_k = tuple(weyr[k - 1] for k in distinct)
    trailing = tuple(sum(weyr[k:]) for k in distinct)
    return IndexSummary(
        weyr=weyr,
        mu=mu,
        distinct=tuple(distinct),
        multiplicities=tuple(mult),
        weyr_at_k=at_k,
        trailing_weyr_sums=trailing,
        n_rank=sum(e * w for e, w in zip(mult, at_k)),
        n_free=sum(e * t for e, t in zip(mult, trailing)),
    )


def indices_from_mu(mu: Sequence[int]) -> IndexSummary:
    """Summary for a known set of controllability indices."""
    mu = sorted((int(k) for k in mu), reverse=True)
    return index_summary(conjugate_partition(mu))
