"""Classical route: modified controllability matrix, Luenberger transformation, last-row elimination.

This is the baseline the proposed construction is compared against. It is
implemented carefully (pivoted factorizations, no explicit inverses) so that
its failures on ill-conditioned systems come from the method itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import EPS, BrunovskyError, LinearSystem, TransformTriple, Uncontrollable
from .parametrization import PivotedQR

log = logging.getLogger(__name__)


class TemplateViolation(BrunovskyError):
    pass


@dataclass(frozen=True)
class ModifiedCtrb:
    C_bar: np.ndarray
    mu: tuple[int, ...]
    warnings: tuple[str, ...] = field(default=())


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``[B, AB, ..., A^{n-1} B]``."""
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def modified_ctrb_matrix(sys: LinearSystem) -> ModifiedCtrb:
    """First ``n`` independent columns of ``[B, AB, ...]`` scanned left to right, grouped per input.

    Independence of ``A^i b_j`` is tested on the part orthogonal to the columns
    kept so far, relative to its own norm (threshold ``1e3 * n * eps``); a
    global threshold would be dominated by the largest power. Once ``A^i b_j`` is
    dependent, all higher powers of ``b_j`` are dependent too and are skipped.
    """
    A, B = sys.A, sys.B
    n, m = sys.n, sys.m
    tol = 1e3 * n * EPS
    basis = np.zeros((n, 0))
    active = [True] * m
    mu = [0] * m
    cols = [[] for _ in range(m)]
    block = B
    for power in range(n):
        for j in range(m):
            if not active[j] or basis.shape[1] == n:
                continue
            v = block[:, j]
            resid = v - basis @ (basis.T @ v)
            resid = resid - basis @ (basis.T @ resid)
            if np.linalg.norm(resid) > tol * np.linalg.norm(v):
                basis = np.hstack([basis, (resid / np.linalg.norm(resid))[:, None]])
                mu[j] += 1
                cols[j].append(v)
            else:
                active[j] = False
        block = A @ block
    if basis.shape[1] < n:
        raise Uncontrollable(f"controllability matrix has rank {basis.shape[1]} < n = {n}", None, basis.shape[1])
    if min(mu) == 0:
        raise Uncontrollable("an input column contributes no independent direction", None, n)
    C_bar = np.column_stack([c for group in cols for c in group])
    return ModifiedCtrb(C_bar, tuple(mu))


def luenberger_T(sys: LinearSystem, C_bar: np.ndarray, mu) -> np.ndarray:
    """Rows ``q_k A^i``, where ``q_k`` is row ``sigma_k`` of ``C_bar^-1``, solved via ``C_bar^T``."""
    A = sys.A
    n = sys.n
    sigma = np.cumsum(mu)
    kappa = np.linalg.cond(C_bar)
    if not np.isfinite(kappa) or kappa * EPS > 1e-2:
        log.warning("modified controllability matrix is ill-conditioned (kappa=%.3e)", kappa)
    fact = PivotedQR(C_bar.T)
    E = np.zeros((n, len(mu)))
    E[sigma - 1, np.arange(len(mu))] = 1.0
    Q = fact.solve(E).T
    rows = []
    for k, mu_k in enumerate(mu):
        r = Q[k]
        for _ in range(mu_k):
            rows.append(r)
            r = r @ A
    return np.array(rows)


def _last_rows(mu) -> np.ndarray:
    return np.cumsum(mu) - 1


def check_canonical_template(A_c, B_c, mu, tol: float) -> float:
    """Largest deviation of the fixed entries of ``(A_c, B_c)`` from the controllable canonical form."""
    n, m = B_c.shape
    A_ref = np.zeros((n, n))
    start = 0
    for k in mu:
        for r in range(start, start + k - 1):
            A_ref[r, r + 1] = 1.0
        start += k
    fixed = np.ones((n, n), dtype=bool)
    fixed[_last_rows(mu), :] = False
    dev = np.max(np.abs(A_c - A_ref)[fixed], initial=0.0)
    last = _last_rows(mu)
    fixed_B = np.ones((n, m), dtype=bool)
    fixed_B[last, :] = False
    B_ref = np.zeros((n, m))
    Bl = B_c[last]
    dev = max(dev, np.max(np.abs(B_c - B_ref)[fixed_B], initial=0.0))
    dev = max(dev, np.max(np.abs(np.tril(Bl, -1)), initial=0.0), np.max(np.abs(np.diag(Bl) - 1.0)))
    if dev > tol:
        raise TemplateViolation(f"pair deviates from the controllable canonical template by {dev:.3e}")
    return dev


def canonical_to_brunovsky(A_c, B_c, mu, tol: float | None = 1e-8):
    """Feedback ``F_c`` and unit upper triangular ``G_c`` cancelling the starred last rows.

    With ``Bl`` the last rows of ``B_c`` and ``Al`` those of ``A_c``:
    ``G_c = Bl^-1`` and ``F_c = -Bl^-1 Al``. Pass ``tol=None`` to skip the
    template check.
    """
    A_c = np.asarray(A_c, dtype=float)
    B_c = np.asarray(B_c, dtype=float)
    if tol is not None:
        check_canonical_template(A_c, B_c, mu, tol)
    last = _last_rows(mu)
    Bl = np.triu(B_c[last])
    np.fill_diagonal(Bl, 1.0)
    G_c = scipy.linalg.solve_triangular(Bl, np.eye(len(mu)), unit_diagonal=True)
    F_c = -scipy.linalg.solve_triangular(Bl, A_c[last], unit_diagonal=True)
    return F_c, G_c


def _chain_order(mu):
    """Stable permutation sorting chains by descending length."""
    return sorted(range(len(mu)), key=lambda i: -mu[i])


def luenberger_pipeline(sys: LinearSystem, check_template: bool = False) -> TransformTriple:
    """Brunovsky transformation through the controllable canonical form.

    Chains come out in input-column order and are then stably re-sorted to
    descending length, with the permutation folded into ``T`` and ``G``.
    """
    mc = modified_ctrb_matrix(sys)
    mu = mc.mu
    T_L = luenberger_T(sys, mc.C_bar, mu)
    fact = PivotedQR(T_L)
    A_c = fact.rsolve(T_L @ sys.A)
    B_c = T_L @ sys.B
    F_c, G_c = canonical_to_brunovsky(A_c, B_c, mu, tol=1e-8 if check_template else None)
    order = _chain_order(mu)
    starts = np.concatenate([[0], np.cumsum(mu)])
    state_perm = np.concatenate([np.arange(starts[i], starts[i + 1]) for i in order])
    T = T_L[state_perm]
    F = F_c @ T_L
    G = G_c[:, order]
    mu_sorted = tuple(mu[i] for i in order)
    diagnostics = {"kappa_C_bar": float(np.linalg.cond(mc.C_bar)), "mu_input_order": list(mu)}
    return TransformTriple(T, F, G, mu_sorted, diagnostics)
