"""Condition numbers and their minimization over the transformation parameters.

The objective is ``log omega(T) + log omega(D)`` where omega is the ratio of the
arithmetic to the geometric mean of the singular values. Both ``T`` and ``D``
are linear in the parameter vector, so they are expanded once in a basis of
unit parameter directions and every objective evaluation afterwards costs two
small SVDs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import EPS, IndexSummary, ParameterSet, SingularD, SingularInput, TransformTriple
from .parametrization import build_transformations, chain_matrices, is_invertible

log = logging.getLogger(__name__)

PENALTY = 1e12


@dataclass(frozen=True)
class ConditionReport:
    kappa: float
    omega: float
    singular_values: np.ndarray


def condition_report(M: np.ndarray) -> ConditionReport:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    kappa = float(s[0] / s[-1]) if s[-1] > EPS * s[0] else np.inf
    omega = _omega_from_sigma(s) if s[-1] > EPS * s[0] else np.inf
    return ConditionReport(kappa, omega, s)


def kappa_cond(M) -> float:
    """``sigma_1 / sigma_n``; ``inf`` once ``sigma_n <= eps * sigma_1``."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if not s[-1] > EPS * s[0]:
        return np.inf
    return float(s[0] / s[-1])


def _omega_from_sigma(s: np.ndarray) -> float:
    # log domain: the plain product of n singular values over- or underflows
    return float(np.exp(np.log(np.mean(s)) - np.mean(np.log(s))))


def omega_cond(M) -> float:
    """Arithmetic over geometric mean of the singular values of a square matrix."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if not s[-1] > EPS * s[0]:
        raise SingularInput(f"omega condition number of a singular matrix (sigma_min={s[-1]:.3e})")
    return _omega_from_sigma(s)


def _log_omega_and_grad(M: np.ndarray):
    """``log omega(M)`` and its gradient ``U V^T / sum(sigma) - M^-T / n``."""
    U, s, Vt = np.linalg.svd(M)
    if not is_invertible(M, s):
        return None, None
    n = M.shape[0]
    val = np.log(np.mean(s)) - np.mean(np.log(s))
    grad = (U @ Vt) / np.sum(s) - (U / s) @ Vt / n
    return val, grad


@dataclass
class OptimizerSettings:
    max_iters: int = 200
    grad_tol: float = 1e-6
    penalty_value: float = PENALTY
    h_scale: float = 1.0
    armijo_c1: float = 1e-4
    gradient: str = "analytic"
    min_step: float = 1e-16

    @classmethod
    def from_dict(cls, d: dict | None) -> "OptimizerSettings":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**d)


class ConditionObjective:
    """``log omega(T) + log omega(D)`` as a function of the parameter vector.

    ``pair`` is ``(A, B)`` in staircase structure, usually after deadbeat
    preprocessing.
    """

    def __init__(self, pair, idx: IndexSummary, template: ParameterSet, penalty: float = PENALTY):
        self.A, self.B = (np.asarray(M, dtype=float) for M in pair)
        self.idx = idx
        self.template = template
        self.penalty = penalty
        basis_T, basis_D = [], []
        for e in np.eye(template.size):
            ch = chain_matrices(template.with_vector(e), self.A, self.B, idx)
            basis_T.append(ch.T)
            basis_D.append(ch.D)
        self.basis_T = np.array(basis_T).reshape(template.size, -1)
        self.basis_D = np.array(basis_D).reshape(template.size, -1)
        self.n_evals = 0

    def matrices(self, x: np.ndarray):
        n, m = self.idx.n, self.idx.m
        return (x @ self.basis_T).reshape(n, n), (x @ self.basis_D).reshape(m, m)

    def __call__(self, x: np.ndarray) -> float:
        self.n_evals += 1
        T, D = self.matrices(np.asarray(x, dtype=float))
        sT = np.linalg.svd(T, compute_uv=False)
        sD = np.linalg.svd(D, compute_uv=False)
        if not (is_invertible(T, sT) and is_invertible(D, sD)):
            return self.penalty
        return float(np.log(np.mean(sT)) - np.mean(np.log(sT)) + np.log(np.mean(sD)) - np.mean(np.log(sD)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Exact gradient by the chain rule through the linear maps to ``T`` and ``D``."""
        T, D = self.matrices(np.asarray(x, dtype=float))
        _, gT = _log_omega_and_grad(T)
        _, gD = _log_omega_and_grad(D)
        if gT is None or gD is None:
            return np.zeros_like(x)
        return self.basis_T @ gT.ravel() + self.basis_D @ gD.ravel()

    def fd_gradient(self, x: np.ndarray, h_scale: float = 1.0, central: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        f0 = None if central else self(x)
        for i in range(x.size):
            h = h_scale * np.sqrt(EPS) * (1.0 + abs(x[i]))
            e = np.zeros_like(x)
            e[i] = h
            if central:
                g[i] = (self(x + e) - self(x - e)) / (2 * h)
            else:
                g[i] = (self(x + e) - f0) / h
        return g


def objective(params: ParameterSet, pair, idx: IndexSummary, penalty: float = PENALTY) -> float:
    """``log omega(T) + log omega(D)``, or ``penalty`` when either is singular."""
    A, B = (np.asarray(M, dtype=float) for M in pair)
    ch = chain_matrices(params, A, B, idx)
    sT = np.linalg.svd(ch.T, compute_uv=False)
    sD = np.linalg.svd(ch.D, compute_uv=False)
    if not (is_invertible(ch.T, sT) and is_invertible(ch.D, sD)):
        return penalty
    return _omega_log(sT) + _omega_log(sD)


def _omega_log(s):
    return float(np.log(np.mean(s)) - np.mean(np.log(s)))


@dataclass
class OptimizationResult:
    params: ParameterSet
    triple: TransformTriple
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    initial_objective: float = np.nan
    final_objective: float = np.nan


def bfgs(fun, grad, x0, settings: OptimizerSettings):
    """Quasi-Newton descent with an inverse-Hessian BFGS update and Armijo backtracking.

    Returns ``(x, f, trace, iterations, converged)``; ``trace`` lists the
    objective at every accepted iterate and is non-increasing.
    """
    x = np.array(x0, dtype=float)
    f = fun(x)
    g = grad(x)
    H = np.eye(x.size)
    trace = [f]
    converged = False
    it = 0
    for it in range(1, settings.max_iters + 1):
        if np.max(np.abs(g), initial=0.0) <= settings.grad_tol:
            converged = True
            it -= 1
            break
        p = -H @ g
        slope = g @ p
        if not slope < 0:
            H = np.eye(x.size)
            p = -g
            slope = g @ p
        t = 1.0
        while True:
            x_new = x + t * p
            f_new = fun(x_new)
            if f_new <= f + settings.armijo_c1 * t * slope:
                break
            t *= 0.5
            if t * np.max(np.abs(p)) < settings.min_step * (1.0 + np.max(np.abs(x))):
                x_new = None
                break
        if x_new is None:
            log.debug("line search stalled at iteration %d (f=%.6g)", it, f)
            break
        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        trace.append(f)
    return x, f, trace, it, converged


def minimize_condition(pair, idx: IndexSummary, init: ParameterSet, settings: OptimizerSettings | None = None):
    """Minimize ``log omega(T) + log omega(D)`` over the parameters, starting at ``init``.

    Never returns a point worse than ``init``; if even ``init`` is numerically
    singular, :class:`SingularD` is raised.
    """
    settings = settings or OptimizerSettings()
    obj = ConditionObjective(pair, idx, init, settings.penalty_value)
    x0 = init.to_vector()
    f0 = obj(x0)
    if f0 >= settings.penalty_value:
        raise SingularD("initial parameters give a singular T or D")
    if settings.gradient == "analytic":
        grad = obj.gradient
    elif settings.gradient == "fd":
        grad = lambda x: obj.fd_gradient(x, settings.h_scale)  # noqa: E731
    else:
        raise ValueError(f"unknown gradient mode {settings.gradient!r}")
    x, f, trace, iters, converged = bfgs(obj, grad, x0, settings)
    if not f <= f0:
        x, f = x0, f0
    params = init.with_vector(x)
    triple = build_transformations(params, obj.A, obj.B, idx)
    return OptimizationResult(
        params=params,
        triple=triple,
        trace=trace,
        iterations=iters,
        converged=converged,
        initial_objective=f0,
        final_objective=f,
    )
