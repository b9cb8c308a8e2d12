"""End-to-end construction of a Brunovsky transformation for a dense pair."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditioning import OptimizerSettings, condition_report, minimize_condition, objective
from .core import IndexSummary, LinearSystem, ParameterSet, StaircasePair, TransformTriple, brunovsky_target
from .deadbeat import apply_predeadbeat, compose_transforms, deadbeat_gain_staircase
from .parametrization import build_transformations, default_parameters
from .staircase import index_summary, reduce_to_staircase


@dataclass
class PipelineResult:
    triple: TransformTriple
    stair: StaircasePair
    idx: IndexSummary
    params: ParameterSet
    K_s: np.ndarray
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "triple": self.triple.to_dict(),
            "indices": self.idx.to_dict(),
            "parameters": self.params.to_dict(),
            "K_s": self.K_s.tolist(),
            "trace": [float(f) for f in self.trace],
        }


def verify_triple(sys: LinearSystem, triple: TransformTriple) -> TransformTriple:
    """Recompute residuals and condition numbers of a triple on the original system.

    Uses a plain LU solve for ``T^-1``, independent of the factorization the
    construction used.
    """
    target = brunovsky_target(triple.mu)
    T = triple.T
    A_hat = np.linalg.solve(T.T, (T @ (sys.A + sys.B @ triple.F)).T).T
    err_A = float(np.linalg.norm(A_hat - target.A_b))
    err_B = float(np.linalg.norm(T @ sys.B @ triple.G - target.B_b))
    rT, rG = condition_report(triple.T), condition_report(triple.G)
    diag = dict(triple.diagnostics)
    diag.update(
        residual_A=err_A,
        residual_B=err_B,
        kappa_T=rT.kappa,
        kappa_G=rG.kappa,
        omega_T=rT.omega,
        omega_G=rG.omega,
    )
    return TransformTriple(triple.T, triple.F, triple.G, triple.mu, diag)


def proposed_pipeline(
    sys: LinearSystem,
    deadbeat: bool = True,
    optimize: bool = True,
    settings: OptimizerSettings | None = None,
    deadbeat_strategy="default-parameters",
    init: ParameterSet | None = None,
) -> PipelineResult:
    """Staircase reduction, optional deadbeat preprocessing, optional conditioning optimization.

    ``init`` replaces the default starting parameters; its shapes must match
    the indices of ``sys``.
    """
    stair = reduce_to_staircase(sys)
    idx = index_summary(stair)
    if deadbeat:
        K_s = deadbeat_gain_staircase(stair, idx, deadbeat_strategy)
        work = apply_predeadbeat(stair, K_s)
    else:
        K_s = np.zeros((sys.m, sys.n))
        work = stair
    params = default_parameters(work, idx)
    if init is not None:
        params = init
    if optimize:
        res = minimize_condition((work.A_s, work.B_s), idx, params, settings)
        params, inner, trace = res.params, res.triple, res.trace
        f0, f1 = res.initial_objective, res.final_objective
    else:
        inner = build_transformations(params, work.A_s, work.B_s, idx)
        f0 = f1 = objective(params, (work.A_s, work.B_s), idx)
        trace = [f0]
    triple = verify_triple(sys, compose_transforms(stair.U, K_s, inner))
    triple.diagnostics["objective_initial"] = f0
    triple.diagnostics["objective_final"] = f1
    return PipelineResult(triple, stair, idx, params, K_s, trace)
